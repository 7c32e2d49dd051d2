//! Oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use graphbal_core::extract::{extract_subgraph, ExtractorConfig};
use graphbal_core::graph::Csr;
use graphbal_core::net::{LayerKind, MessageGraph, Model, ModelConfig, SubgraphBatch};
use graphbal_core::train::{classification_loss, reconstruction_loss, total_loss};
use graphbal_core::autodiff::Pointwise;
use graphbal_core::{Matrix, ParamStore, Tape, TapeTensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

pub const FD_STEP: f64 = 1e-5;
pub const GRAD_REL_TOL: f64 = 1e-4;
/// Denominator floor of the relative error, so entries that are zero
/// analytically are compared on an absolute scale.
pub const GRAD_REL_FLOOR: f64 = 1e-6;

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(GRAD_REL_FLOOR)
}

#[derive(Debug, Clone)]
pub struct GradCase {
    pub name: String,
    pub max_rel: f64,
    pub entries: usize,
}

pub fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-1.5..1.5)).collect()).unwrap()
}

/// Entries bounded away from zero, for kinked ops.
fn away_from_zero(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    random_matrix(rng, r, c).map(|x| if x.abs() < 0.2 { x.signum() * 0.2 + x } else { x })
}

type Build = dyn Fn(&mut Tape, &[TapeTensor]) -> TapeTensor;

/// Compares tape gradients of `sum(f(inputs) ⊙ R)` for a fixed random `R`
/// against central differences in every input entry.
pub fn check_inputs(name: &str, inputs: Vec<Matrix>, f: &Build) -> GradCase {
    let mut rng = ChaCha8Rng::seed_from_u64(name.len() as u64);
    let shape = {
        let mut t = Tape::new();
        let vars: Vec<_> = inputs.iter().map(|m| t.variable(m.clone())).collect();
        f(&mut t, &vars).shape()
    };
    let weights = random_matrix(&mut rng, shape.0, shape.1);
    let eval = |ins: &[Matrix], grads: bool| -> (f64, Vec<Matrix>) {
        let mut t = Tape::new();
        let vars: Vec<_> = ins.iter().map(|m| t.variable(m.clone())).collect();
        let out = f(&mut t, &vars);
        let w = t.constant(weights.clone());
        let prod = t.hadamard(out, w).unwrap();
        let loss = t.sum_all(prod);
        let value = t.value(loss).scalar();
        if !grads {
            return (value, Vec::new());
        }
        t.backward(loss).unwrap();
        (value, vars.iter().map(|&v| t.grad(v)).collect())
    };
    let (_, analytic) = eval(&inputs, true);
    let mut max_rel: f64 = 0.0;
    let mut entries = 0;
    for k in 0..inputs.len() {
        for i in 0..inputs[k].data().len() {
            let mut plus = inputs.clone();
            plus[k].data_mut()[i] += FD_STEP;
            let mut minus = inputs.clone();
            minus[k].data_mut()[i] -= FD_STEP;
            let numeric = (eval(&plus, false).0 - eval(&minus, false).0) / (2.0 * FD_STEP);
            max_rel = max_rel.max(rel_err(analytic[k].data()[i], numeric));
            entries += 1;
        }
    }
    GradCase {
        name: name.to_string(),
        max_rel,
        entries,
    }
}

/// Every tape operation on random inputs of at most 10 rows.
pub fn op_cases(seed: u64) -> Vec<GradCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = &mut rng;
    let (a34, b34) = (random_matrix(r, 3, 4), random_matrix(r, 3, 4));
    let mut cases = vec![
        check_inputs("matmul", vec![random_matrix(r, 3, 4), random_matrix(r, 4, 2)], &|t, v| {
            t.matmul(v[0], v[1]).unwrap()
        }),
        check_inputs("matmul_self", vec![random_matrix(r, 3, 3)], &|t, v| t.matmul(v[0], v[0]).unwrap()),
        check_inputs("add", vec![a34.clone(), b34.clone()], &|t, v| t.add(v[0], v[1]).unwrap()),
        check_inputs("sub", vec![a34.clone(), b34.clone()], &|t, v| t.sub(v[0], v[1]).unwrap()),
        check_inputs("hadamard", vec![a34.clone(), b34.clone()], &|t, v| t.hadamard(v[0], v[1]).unwrap()),
        check_inputs("add_row", vec![a34.clone(), random_matrix(r, 1, 4)], &|t, v| {
            t.add_row(v[0], v[1]).unwrap()
        }),
        check_inputs("mul_col", vec![random_matrix(r, 3, 1), a34.clone()], &|t, v| {
            t.mul_col(v[0], v[1]).unwrap()
        }),
        check_inputs("scale", vec![a34.clone()], &|t, v| t.scale(v[0], -2.5)),
        check_inputs("add_scalar", vec![a34.clone()], &|t, v| t.add_scalar(v[0], 0.7)),
        check_inputs("neg", vec![a34.clone()], &|t, v| t.neg(v[0])),
        check_inputs("sigmoid", vec![random_matrix(r, 5, 3)], &|t, v| t.sigmoid(v[0])),
        check_inputs("relu", vec![away_from_zero(r, 5, 3)], &|t, v| t.relu(v[0])),
        check_inputs("log_clamped", vec![random_matrix(r, 4, 2).map(|x| x.abs() + 0.1)], &|t, v| {
            t.log_clamped(v[0], 1e-12)
        }),
        check_inputs("concat_cols", vec![random_matrix(r, 3, 2), random_matrix(r, 3, 3)], &|t, v| {
            t.concat_cols(&[v[0], v[1], v[0]]).unwrap()
        }),
        check_inputs("slice_cols", vec![random_matrix(r, 3, 5)], &|t, v| t.slice_cols(v[0], 1, 3).unwrap()),
        check_inputs("sum_all", vec![a34.clone()], &|t, v| t.sum_all(v[0])),
        check_inputs("mean_all", vec![a34.clone()], &|t, v| t.mean_all(v[0])),
        check_inputs("row_l2norm", vec![away_from_zero(r, 4, 3)], &|t, v| t.row_l2norm(v[0])),
        check_inputs("softmax_rows", vec![random_matrix(r, 4, 3)], &|t, v| t.softmax_rows(v[0])),
        check_inputs("log_softmax_rows", vec![random_matrix(r, 4, 3)], &|t, v| t.log_softmax_rows(v[0])),
        check_inputs("gather_rows", vec![random_matrix(r, 4, 3)], &|t, v| {
            t.gather_rows(v[0], Arc::from([2, 0, 2, 3].as_slice())).unwrap()
        }),
        check_inputs("segment_sum", vec![random_matrix(r, 5, 2)], &|t, v| {
            t.segment_sum(v[0], Arc::from([1, 0, 1, 3, 1].as_slice()), 4).unwrap()
        }),
        check_inputs("neighbor_sum", vec![random_matrix(r, 6, 1), random_matrix(r, 4, 3)], &|t, v| {
            let dst: Arc<[usize]> = Arc::from([0, 1, 1, 2, 3, 0].as_slice());
            let src: Arc<[usize]> = Arc::from([1, 0, 2, 1, 3, 3].as_slice());
            t.neighbor_sum(v[0], v[1], dst, src, 4).unwrap()
        }),
        check_inputs("dropout", vec![random_matrix(r, 5, 4)], &|t, v| {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            t.dropout(v[0], 0.4, true, &mut rng).unwrap()
        }),
        check_inputs("pick", vec![random_matrix(r, 3, 3)], &|t, v| {
            t.pick(v[0], Arc::from([(0, 2), (2, 1), (0, 2)].as_slice())).unwrap()
        }),
    ];
    for kind in [Pointwise::Sigmoid, Pointwise::Negate, Pointwise::MeanAll] {
        cases.push(check_inputs(&format!("pointwise/{kind:?}"), vec![random_matrix(r, 3, 2)], &move |t, v| {
            t.pointwise(kind, &[v[0]]).unwrap()
        }));
    }
    cases.push(check_inputs("pointwise/Relu", vec![away_from_zero(r, 3, 2)], &|t, v| {
        t.pointwise(Pointwise::Relu, &[v[0]]).unwrap()
    }));
    cases.push(check_inputs("pointwise/RowL2Norm", vec![away_from_zero(r, 3, 2)], &|t, v| {
        t.pointwise(Pointwise::RowL2Norm, &[v[0]]).unwrap()
    }));
    for kind in [Pointwise::Add, Pointwise::Hadamard, Pointwise::ConcatCols] {
        cases.push(check_inputs(
            &format!("pointwise/{kind:?}"),
            vec![random_matrix(r, 3, 2), random_matrix(r, 3, 2)],
            &move |t, v| t.pointwise(kind, &[v[0], v[1]]).unwrap(),
        ));
    }
    // a chain mixing several ops
    cases.push(check_inputs(
        "chain",
        vec![random_matrix(r, 4, 3), random_matrix(r, 3, 2), random_matrix(r, 1, 2)],
        &|t, v| {
            let h = t.matmul(v[0], v[1]).unwrap();
            let h = t.add_row(h, v[2]).unwrap();
            let s = t.sigmoid(h);
            let n = t.row_l2norm(s);
            let m = t.mul_col(n, s).unwrap();
            t.log_softmax_rows(m)
        },
    ));
    cases
}

/// Random undirected graph with every node on at least one edge.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Csr {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
        if u + 1 < n && !edges.iter().any(|&(a, b)| a == u || b == u) {
            edges.push((u, u + 1));
        }
    }
    Csr::from_undirected(n, edges)
}

/// Central differences over every trainable entry of `store` against the
/// tape gradient of `loss`.
pub fn check_params(name: &str, store: &ParamStore, loss: &dyn Fn(&mut Tape, &ParamStore) -> TapeTensor) -> GradCase {
    let mut analytic = store.clone();
    analytic.zero_grads();
    let mut t = Tape::new();
    let l = loss(&mut t, &analytic);
    t.backward(l).unwrap();
    t.accumulate_param_grads(&mut analytic);
    let value = |s: &ParamStore| {
        let mut t = Tape::new();
        let l = loss(&mut t, s);
        t.value(l).scalar()
    };
    let mut max_rel: f64 = 0.0;
    let mut entries = 0;
    let mut probe = store.clone();
    for id in store.ids().collect::<Vec<_>>() {
        if !store.get(id).trainable {
            continue;
        }
        for i in 0..store.value(id).data().len() {
            let orig = store.value(id).data()[i];
            probe.get_mut(id).value.data_mut()[i] = orig + FD_STEP;
            let up = value(&probe);
            probe.get_mut(id).value.data_mut()[i] = orig - FD_STEP;
            let down = value(&probe);
            probe.get_mut(id).value.data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            max_rel = max_rel.max(rel_err(analytic.get(id).grad.data()[i], numeric));
            entries += 1;
        }
    }
    GradCase {
        name: name.to_string(),
        max_rel,
        entries,
    }
}

/// Reconstruction, classification and total loss through the real networks
/// on a random 10-node graph, for each layer kind.
pub fn composed_cases(seed: u64) -> Vec<GradCase> {
    let mut out = Vec::new();
    for kind in [LayerKind::MultiFilter, LayerKind::MultiFilterSum, LayerKind::MeanAgg] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 10;
        let adj = random_graph(&mut rng, n, 0.3);
        let x = random_matrix(&mut rng, n, 4);
        let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let ext = ExtractorConfig {
            drnl_cap: 4,
            hops: 1,
            ..ExtractorConfig::default()
        };
        let cfg = ModelConfig {
            encoder_dims: vec![5, 3],
            classifier_dims: vec![5, 4],
            omega: 0.3,
            dropout: 0.3,
            projection_dim: 2,
            encoder_kind: kind,
            classifier_kind: kind,
        };
        let mut model = Model::new(cfg, 4, ext.label_width(), 3, &mut rng).unwrap();
        // the readout starts at zero, which would hide every upstream gradient
        let pool = model.encoder.w_pool;
        let (pr, pc) = model.store.value(pool).shape();
        model.store.get_mut(pool).value = random_matrix(&mut rng, pr, pc);

        let edges: Vec<(usize, usize)> = adj.edges().take(3).collect();
        let non_edges: Vec<(usize, usize)> = (0..n)
            .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
            .filter(|&(u, v)| !adj.has_edge(u, v))
            .take(3)
            .collect();
        let batch = |links: &[(usize, usize)]| {
            let parts: Vec<(Csr, Matrix)> = links
                .iter()
                .map(|&(u, v)| {
                    let s = extract_subgraph(&adj, u, v, &ext, None).unwrap();
                    let xi = s.input_features(&x, ext.drnl_cap);
                    (s.adj, xi)
                })
                .collect();
            SubgraphBatch::new(&parts).unwrap()
        };
        let (pos, neg) = (batch(&edges), batch(&non_edges));
        let mg = MessageGraph::from_csr(&adj);
        let targets: Vec<(usize, usize)> = (0..6).map(|i| (i, labels[i])).collect();
        let model = &model;

        let rec = |t: &mut Tape, s: &ParamStore| {
            let mut r = ChaCha8Rng::seed_from_u64(5);
            let p = model.encoder.forward(t, s, &pos, true, &mut r).unwrap();
            let q = model.encoder.forward(t, s, &neg, true, &mut r).unwrap();
            reconstruction_loss(t, p, q).unwrap()
        };
        let cls = |t: &mut Tape, s: &ParamStore| {
            let mut r = ChaCha8Rng::seed_from_u64(6);
            let xt = t.constant(x.clone());
            let lp = model.classifier.forward(t, s, &mg, xt, true, &mut r).unwrap();
            classification_loss(t, lp, &targets).unwrap()
        };
        let tag = format!("{kind:?}").to_lowercase();
        out.push(check_params(&format!("reconstruction/{tag}"), &model.store, &rec));
        out.push(check_params(&format!("classification/{tag}"), &model.store, &cls));
        out.push(check_params(&format!("total/{tag}"), &model.store, &|t, s| {
            let a = rec(t, s);
            let b = cls(t, s);
            total_loss(t, a, b, 0.3).unwrap()
        }));
    }
    out
}

/// All-pairs hop distances by Floyd–Warshall; `None` when unreachable.
pub fn floyd_warshall(adj: &Csr) -> Vec<Vec<Option<usize>>> {
    let n = adj.num_nodes();
    let inf = usize::MAX / 4;
    let mut d = vec![vec![inf; n]; n];
    for u in 0..n {
        d[u][u] = 0;
        for &v in adj.neighbors(u) {
            d[u][v] = 1;
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d.into_iter()
        .map(|row| row.into_iter().map(|x| (x < inf).then_some(x)).collect())
        .collect()
}

/// Double-radius label by enumeration: centers are 1, and a node at
/// distances `(a, b)` gets 2 plus the number of unordered pairs of positive
/// distances that precede `{a, b}` in (sum, smaller) order.
pub fn drnl_by_enumeration(a: Option<usize>, b: Option<usize>, cap: usize) -> usize {
    let (a, b) = match (a, b) {
        (Some(0), _) | (_, Some(0)) => return 1,
        (Some(a), Some(b)) => (a.min(b), a.max(b)),
        _ => return 0,
    };
    let mut before = 0;
    for s in 2..=a + b {
        for lo in 1..=s / 2 {
            if (s, lo) < (a + b, a) {
                before += 1;
            }
        }
    }
    (2 + before).min(cap)
}

/// Pearson χ² statistic of `observed` counts against probabilities.
pub fn chi_square(observed: &[usize], probs: &[f64]) -> f64 {
    let total: usize = observed.iter().sum();
    observed
        .iter()
        .zip(probs)
        .map(|(&o, &p)| {
            let e = p * total as f64;
            (o as f64 - e).powi(2) / e
        })
        .sum()
}
