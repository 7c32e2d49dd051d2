use super::{
    classification_loss, evaluate, reconstruction_loss, sample_negatives, total_loss, Ablation,
    HyperParams, MetricsReport,
};
use crate::autodiff::{AdamState, Matrix, ParamStore, Tape};
use crate::error::{Error, Result};
use crate::extract::{attach_nodes, extract_subgraph, sample_candidate_edges, ExtractorConfig};
use crate::graph::{edge_homophily, Csr, Graph, ImbalanceSpec, Masks};
use crate::mixer::{
    build_mask, integrated_gradient, interpolate_features, mix_features, nearest_same_class,
    pair_similarity, sample_pairs, MixerConfig, NodePair, SyntheticNode,
};
use crate::net::{apply_threshold, MessageGraph, Model, SubgraphBatch};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::time::Instant;

const SCORE_CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub l_rec: f64,
    pub l_cls: f64,
    pub total: f64,
    pub val_acc: f64,
    /// Mean negative log-likelihood over validation nodes.
    pub val_loss: f64,
    /// Seconds since training started.
    pub wall_time: f64,
    pub synthetic: usize,
    pub accepted_edges: usize,
}

/// A proposed edge between a synthetic node and an original node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredEdge {
    pub syn: usize,
    pub target: usize,
    pub p: f64,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    /// Test metrics at the epoch with the best validation accuracy.
    pub test: MetricsReport,
    pub val_accuracy: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub learning_rate: f64,
    pub log: Vec<EpochLog>,
    /// Weights restored to the best epoch.
    pub model: Model,
    /// Synthetic nodes of the best epoch.
    pub synthetic: Vec<SyntheticNode>,
    /// Every scored candidate of the best epoch.
    pub scored_edges: Vec<ScoredEdge>,
}

impl PipelineOutput {
    pub fn accepted_edges(&self, eta: f64) -> impl Iterator<Item = &ScoredEdge> {
        self.scored_edges.iter().filter(move |e| e.p > eta)
    }
}

/// Eval-mode link probabilities for `links` on `adj`.
pub fn score_links(
    model: &Model,
    adj: &Csr,
    features: &Matrix,
    links: &[(usize, usize)],
    cfg: &ExtractorConfig,
) -> Result<Vec<f64>> {
    if links.is_empty() {
        return Ok(Vec::new());
    }
    let parts = link_inputs(model, adj, features, links, cfg)?;
    // eval mode never draws from the generator
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut out = Vec::with_capacity(links.len());
    for chunk in parts.chunks(SCORE_CHUNK) {
        let batch = SubgraphBatch::new(chunk)?;
        let mut tape = Tape::new();
        let p = model.encoder.forward(&mut tape, &model.store, &batch, false, &mut rng)?;
        out.extend_from_slice(tape.value(p).data());
    }
    Ok(out)
}

fn link_inputs(
    model: &Model,
    adj: &Csr,
    features: &Matrix,
    links: &[(usize, usize)],
    cfg: &ExtractorConfig,
) -> Result<Vec<(Csr, Matrix)>> {
    let state = if cfg.adaptive {
        Some(model.encoder.relevance_state(&model.store, adj, features)?)
    } else {
        None
    };
    let weight = model.store.value(model.relevance_weight);
    links
        .iter()
        .map(|&(u, v)| {
            let sub = extract_subgraph(adj, u, v, cfg, state.as_ref().map(|s| (s, weight)))?;
            let x = sub.input_features(features, cfg.drnl_cap);
            Ok((sub.adj, x))
        })
        .collect()
}

/// Integrated-gradient importance of node `t`'s features for the current
/// classifier, evaluated on `t`'s receptive field in eval mode.
pub fn node_importance(
    model: &Model,
    adj: &Csr,
    features: &Matrix,
    label: usize,
    t: usize,
    steps: usize,
) -> Result<Vec<f64>> {
    let radius = model.classifier.layers.len();
    // ego nodes ordered by distance, so each layer's needed rows are a prefix
    let dist = adj.bfs(t, Some(radius));
    let mut nodes: Vec<usize> = (0..adj.num_nodes()).filter(|&k| dist[k].is_some()).collect();
    nodes.sort_by_key(|&k| (dist[k], k));
    let local = 0;
    let full = MessageGraph::from_csr(&adj.induced(&nodes, None));
    let within = |r: usize| nodes.iter().take_while(|&&k| dist[k].is_some_and(|d| d <= r)).count();
    let graphs = (1..=radius)
        .map(|l| full.truncated(within(radius - l + 1), within(radius - l)))
        .collect::<Result<Vec<_>>>()?;
    let graphs: Vec<&MessageGraph> = graphs.iter().collect();
    let base = features.select_rows(&nodes);
    let loss = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
        let mut xm = base.clone();
        xm.row_mut(local).copy_from_slice(x);
        let mut tape = Tape::new();
        let xt = tape.variable(xm);
        // eval mode never draws from the generator
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let log_probs = model.classifier.forward_layers(&mut tape, &model.store, &graphs, xt, false, &mut rng)?;
        let l = classification_loss(&mut tape, log_probs, &[(local, label)])?;
        tape.backward(l)?;
        Ok((tape.value(l).scalar(), tape.grad(xt).row(local).to_vec()))
    };
    integrated_gradient(&loss, features.row(t), steps)
}

#[allow(clippy::too_many_arguments)]
fn synthesize<R: Rng + ?Sized>(
    model: &Model,
    g: &Graph,
    masks: &Masks,
    spec: &ImbalanceSpec,
    mix: &MixerConfig,
    ablation: Ablation,
    importance: &mut HashMap<usize, Vec<f64>>,
    rng: &mut R,
) -> Result<(Vec<NodePair>, Vec<SyntheticNode>)> {
    if mix.zeta == 0.0 {
        return Ok((Vec::new(), Vec::new()));
    }
    let labels = g.labels()?;
    let x = g.features();
    let mut pairs = sample_pairs(g, masks, spec, mix, rng)?;
    let mut out = Vec::with_capacity(pairs.len());
    for pair in &mut pairs {
        let xs = x.row(pair.v_s);
        let node = if ablation == Ablation::NoUfm {
            pair.v_t = nearest_same_class(x, labels, &masks.train, pair.v_s);
            let delta: f64 = rng.random();
            SyntheticNode {
                features: interpolate_features(xs, x.row(pair.v_t), delta),
                label: labels[pair.v_s],
                pair: *pair,
                similarity: 0.0,
            }
        } else {
            let t = pair.v_t;
            if !importance.contains_key(&t) {
                let d = node_importance(model, g.adj(), x, labels[t], t, mix.steps)?;
                importance.insert(t, d);
            }
            let xt = x.row(t);
            let sim = pair_similarity(xs, xt, model.store.value(model.projection))?;
            let mask = build_mask(sim, &importance[&t], mix.kappa);
            SyntheticNode {
                features: mix_features(xs, xt, &mask)?,
                label: labels[pair.v_s],
                pair: *pair,
                similarity: sim,
            }
        };
        out.push(node);
    }
    Ok((pairs, out))
}

fn check_finite(epoch: usize, what: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("epoch {epoch}: {what} = {v}")))
    }
}

fn rows(m: &Matrix, n: usize) -> Matrix {
    Matrix::from_vec(n, m.cols(), m.data()[..n * m.cols()].to_vec()).expect("prefix rows")
}

struct Best {
    store: ParamStore,
    epoch: usize,
    val_acc: f64,
    val_loss: f64,
    test: MetricsReport,
    synthetic: Vec<SyntheticNode>,
    scored: Vec<ScoredEdge>,
}

/// Trains the edge scorer and node classifier on `g` (masks set) and reports
/// test metrics at the best validation epoch.
///
/// Schedule: classifier-only warm-up on the original graph, then per epoch
/// synthesize minority nodes, score their candidate edges, build the
/// balanced graph, and take one optimizer step on the weighted sum of the
/// link reconstruction loss (a mini-batch of real edges with one negative
/// each) and the classification loss (training plus synthetic nodes).
pub fn run_pipeline(
    g: &Graph,
    spec: &ImbalanceSpec,
    hp: &HyperParams,
    ablation: Ablation,
) -> Result<PipelineOutput> {
    hp.validate()?;
    let labels = g.labels()?.to_vec();
    let n = g.num_nodes();
    let masks = g.masks().clone();
    masks.validate(n)?;
    spec.validate(g.num_classes())?;
    for (name, m) in [("train", &masks.train), ("val", &masks.val), ("test", &masks.test)] {
        if !m.iter().any(|&b| b) {
            return Err(Error::Contract(format!("{name} mask is empty")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let ext = hp.extractor(ablation);
    let mix = hp.mixer();
    let mut model = Model::new(
        hp.model(ablation),
        g.feature_dim(),
        ext.label_width(),
        g.num_classes(),
        &mut rng,
    )?;
    let learning_rate = hp.learning_rate(edge_homophily(g)?);
    let mut adam = AdamState::new(learning_rate, hp.weight_decay);
    let adj = g.adj();
    let x = g.features();
    let mg = MessageGraph::from_csr(adj);
    let edges: Vec<(usize, usize)> = adj.edges().collect();
    let base_targets: Vec<(usize, usize)> = Masks::indices(&masks.train)
        .into_iter()
        .map(|i| (i, labels[i]))
        .collect();

    for w in 0..hp.warmup_epochs {
        let mut tape = Tape::new();
        let xt = tape.constant(x.clone());
        let log_probs = model.classifier.forward(&mut tape, &model.store, &mg, xt, true, &mut rng)?;
        let loss = classification_loss(&mut tape, log_probs, &base_targets)?;
        check_finite(w, "warm-up classification loss", tape.value(loss).scalar())?;
        tape.backward(loss)?;
        tape.accumulate_param_grads(&mut model.store);
        adam.step(&mut model.store);
    }

    let start = Instant::now();
    let mut importance = HashMap::new();
    let mut best: Option<Best> = None;
    let mut stale = 0;
    let mut log = Vec::new();
    for epoch in 1..=hp.epochs {
        if (epoch - 1) % hp.refresh_interval == 0 {
            importance.clear();
        }
        let (pairs, synthetic) =
            synthesize(&model, g, &masks, spec, &mix, ablation, &mut importance, &mut rng)?;
        let s = synthetic.len();
        let prov = attach_nodes(
            adj,
            &pairs.iter().map(|p| vec![p.v_s, p.v_t]).collect::<Vec<_>>(),
        );
        let mut aug_data = x.data().to_vec();
        for node in &synthetic {
            aug_data.extend_from_slice(&node.features);
        }
        let x_aug = Matrix::from_vec(n + s, x.cols(), aug_data)?;
        let syn_ids: Vec<usize> = (n..n + s).collect();
        let candidates = sample_candidate_edges(adj, &pairs, &syn_ids, ext.xi, &mut rng)?;
        let links: Vec<(usize, usize)> = candidates.iter().map(|c| (c.syn, c.target)).collect();
        let probs = score_links(&model, &prov, &x_aug, &links, &ext)?;
        let keep = apply_threshold(&probs, hp.eta);
        let scored: Vec<ScoredEdge> = links
            .iter()
            .zip(&probs)
            .map(|(&(syn, target), &p)| ScoredEdge { syn, target, p })
            .collect();

        // balanced graph: original nodes, then kept synthetic nodes
        let mut connected = vec![false; s];
        for (e, &k) in scored.iter().zip(&keep) {
            if k {
                connected[e.syn - n] = true;
            }
        }
        let kept: Vec<usize> = (0..s).filter(|&j| !hp.drop_isolated || connected[j]).collect();
        let mut new_id = vec![usize::MAX; s];
        for (pos, &j) in kept.iter().enumerate() {
            new_id[j] = n + pos;
        }
        let accepted: Vec<(usize, usize)> = scored
            .iter()
            .zip(&keep)
            .filter(|&(_, &k)| k)
            .map(|(e, _)| (new_id[e.syn - n], e.target))
            .collect();
        let bal_adj = Csr::from_undirected(n + kept.len(), edges.iter().copied().chain(accepted.iter().copied()));
        let mut bal_data = x.data().to_vec();
        for &j in &kept {
            bal_data.extend_from_slice(&synthetic[j].features);
        }
        let bal_x = Matrix::from_vec(n + kept.len(), x.cols(), bal_data)?;
        let bal_mg = MessageGraph::from_csr(&bal_adj);
        let mut targets = base_targets.clone();
        targets.extend(kept.iter().map(|&j| (new_id[j], synthetic[j].label)));

        let mut tape = Tape::new();
        let rec = if edges.is_empty() {
            tape.constant(Matrix::zeros(1, 1))
        } else {
            let k = hp.batch_size.min(edges.len());
            let pos: Vec<(usize, usize)> = rand::seq::index::sample(&mut rng, edges.len(), k)
                .into_iter()
                .map(|i| edges[i])
                .collect();
            let neg = sample_negatives(adj, &pos, hp.negative_retries, &mut rng)?;
            let all: Vec<(usize, usize)> = pos.iter().chain(&neg).copied().collect();
            let parts = link_inputs(&model, adj, x, &all, &ext)?;
            let batch = SubgraphBatch::new(&parts)?;
            let p = model.encoder.forward(&mut tape, &model.store, &batch, true, &mut rng)?;
            let pp = tape.gather_rows(p, (0..k).collect::<Vec<_>>().into())?;
            let pn = tape.gather_rows(p, (k..2 * k).collect::<Vec<_>>().into())?;
            reconstruction_loss(&mut tape, pp, pn)?
        };
        let xt = tape.constant(bal_x.clone());
        let cls_log_probs = model.classifier.forward(&mut tape, &model.store, &bal_mg, xt, true, &mut rng)?;
        let cls = classification_loss(&mut tape, cls_log_probs, &targets)?;
        let total = total_loss(&mut tape, rec, cls, hp.lambda)?;
        let (l_rec, l_cls, l_total) = (
            tape.value(rec).scalar(),
            tape.value(cls).scalar(),
            tape.value(total).scalar(),
        );
        check_finite(epoch, "reconstruction loss", l_rec)?;
        check_finite(epoch, "classification loss", l_cls)?;
        tape.backward(total)
            .map_err(|e| Error::NonFinite(format!("epoch {epoch}: {e}")))?;
        tape.accumulate_param_grads(&mut model.store);
        adam.step(&mut model.store);
        drop(tape);

        let log_eval = rows(&model.classifier.predict_log_proba(&model.store, &bal_mg, &bal_x)?, n);
        let eval = log_eval.map(f64::exp);
        let val_acc = evaluate(&eval, &labels, &masks.val)?.accuracy;
        let val_rows = Masks::indices(&masks.val);
        let val_loss =
            -val_rows.iter().map(|&i| log_eval.get(i, labels[i])).sum::<f64>() / val_rows.len() as f64;
        log::debug!(
            "epoch {epoch}: rec {l_rec:.4} cls {l_cls:.4} val {val_acc:.4} synthetic {s} accepted {}",
            accepted.len()
        );
        log.push(EpochLog {
            epoch,
            l_rec,
            l_cls,
            total: l_total,
            val_acc,
            val_loss,
            wall_time: start.elapsed().as_secs_f64(),
            synthetic: s,
            accepted_edges: accepted.len(),
        });

        // equal accuracy falls back to the lower validation loss
        let improved = best
            .as_ref()
            .is_none_or(|b| val_acc > b.val_acc || (val_acc == b.val_acc && val_loss < b.val_loss));
        if improved {
            best = Some(Best {
                store: model.store.clone(),
                epoch,
                val_acc,
                val_loss,
                test: evaluate(&eval, &labels, &masks.test)?,
                synthetic,
                scored,
            });
            stale = 0;
        } else {
            stale += 1;
            if stale >= hp.patience && epoch >= hp.min_epochs {
                break;
            }
        }
    }

    let best = best.expect("at least one epoch runs");
    model.store = best.store;
    Ok(PipelineOutput {
        test: best.test,
        val_accuracy: best.val_acc,
        best_epoch: best.epoch,
        epochs_run: log.len(),
        learning_rate,
        log,
        model,
        synthetic: best.synthetic,
        scored_edges: best.scored,
    })
}
