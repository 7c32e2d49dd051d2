use super::Graph;
use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Masks {
    pub train: Vec<bool>,
    pub val: Vec<bool>,
    pub test: Vec<bool>,
}

impl Masks {
    pub fn empty(n: usize) -> Self {
        Self {
            train: vec![false; n],
            val: vec![false; n],
            test: vec![false; n],
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.train.len() != n || self.val.len() != n || self.test.len() != n {
            return Err(Error::Contract(format!("mask lengths differ from node count {n}")));
        }
        if let Some(i) = (0..n)
            .find(|&i| [self.train[i], self.val[i], self.test[i]].iter().filter(|&&b| b).count() > 1)
        {
            return Err(Error::Contract(format!("node {i} is in more than one mask")));
        }
        Ok(())
    }

    pub fn indices(mask: &[bool]) -> Vec<usize> {
        mask.iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect()
    }
}

/// Which classes are down-sampled in training, and by how much.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImbalanceSpec {
    pub minority_classes: Vec<usize>,
    pub im_ratio: f64,
    #[serde(default = "default_majority_train")]
    pub majority_train_count: usize,
}

fn default_majority_train() -> usize {
    20
}

impl ImbalanceSpec {
    pub fn new(minority_classes: Vec<usize>, im_ratio: f64) -> Self {
        Self {
            minority_classes,
            im_ratio,
            majority_train_count: default_majority_train(),
        }
    }

    pub fn is_minority(&self, class: usize) -> bool {
        self.minority_classes.contains(&class)
    }

    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if !(self.im_ratio > 0.0 && self.im_ratio <= 1.0) {
            return Err(Error::config(
                "imbalance.im_ratio",
                format!("{} outside (0, 1]", self.im_ratio),
            ));
        }
        if let Some(&c) = self.minority_classes.iter().find(|&&c| c >= num_classes) {
            return Err(Error::config(
                "imbalance.minority_classes",
                format!("class {c} does not exist ({num_classes} classes)"),
            ));
        }
        if self.minority_classes.len() >= num_classes && num_classes > 0 {
            return Err(Error::config(
                "imbalance.minority_classes",
                "at least one majority class is required",
            ));
        }
        Ok(())
    }

    /// Training quota of a minority class given the majority quota.
    pub fn minority_quota(&self, majority: usize) -> usize {
        ((majority as f64 * self.im_ratio + 1e-9).floor() as usize).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    /// Fixed per-class training quota.
    Semi,
    /// 7:1:2 split with down-sampled minority training sets.
    Supervised,
}

/// Per-class size of the validation and test sets (equal for every class).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalQuota {
    PerClass { val: usize, test: usize },
    /// Fractions of the smallest class's pool of non-training nodes
    /// (semi) or of the smallest class size (supervised).
    Fraction { val: f64, test: f64 },
}

impl Default for EvalQuota {
    fn default() -> Self {
        EvalQuota::Fraction {
            val: 1.0 / 3.0,
            test: 2.0 / 3.0,
        }
    }
}

/// Draws train/val/test masks with down-sampled minority training classes.
/// Deterministic for a fixed RNG state.
pub fn make_imbalanced_split<R: Rng + ?Sized>(
    g: &Graph,
    spec: &ImbalanceSpec,
    setting: Setting,
    eval: EvalQuota,
    rng: &mut R,
) -> Result<Masks> {
    let labels = g.labels()?;
    let c_count = g.num_classes();
    spec.validate(c_count)?;
    let n = g.num_nodes();

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); c_count];
    for (i, &c) in labels.iter().enumerate() {
        by_class[c].push(i);
    }
    for nodes in &mut by_class {
        nodes.shuffle(rng);
    }

    let train_quota: Vec<usize> = match setting {
        Setting::Semi => {
            let maj = spec.majority_train_count;
            (0..c_count)
                .map(|c| if spec.is_minority(c) { spec.minority_quota(maj) } else { maj })
                .collect()
        }
        Setting::Supervised => {
            let seventy = |c: usize| (by_class[c].len() as f64 * 0.7 + 1e-9).floor() as usize;
            let max_major = (0..c_count)
                .filter(|&c| !spec.is_minority(c))
                .map(seventy)
                .max()
                .unwrap_or(0);
            (0..c_count)
                .map(|c| {
                    if spec.is_minority(c) {
                        spec.minority_quota(max_major).min(seventy(c)).max(1)
                    } else {
                        seventy(c)
                    }
                })
                .collect()
        }
    };

    for c in 0..c_count {
        if train_quota[c] > by_class[c].len() {
            return Err(Error::Split {
                class: c,
                msg: format!(
                    "needs {} training nodes but has {}",
                    train_quota[c],
                    by_class[c].len()
                ),
            });
        }
    }

    let (val_k, test_k) = match eval {
        EvalQuota::PerClass { val, test } => (val, test),
        EvalQuota::Fraction { val, test } => {
            let base = match setting {
                Setting::Semi => (0..c_count)
                    .map(|c| by_class[c].len() - train_quota[c])
                    .min()
                    .unwrap_or(0),
                Setting::Supervised => by_class.iter().map(Vec::len).min().unwrap_or(0),
            };
            let f = |x: f64| (base as f64 * x + 1e-9).floor() as usize;
            (f(val), f(test))
        }
    };

    let mut masks = Masks::empty(n);
    for (c, nodes) in by_class.iter().enumerate() {
        // supervised: eval nodes come first so minority down-sampling only shrinks train
        let (eval_first, train_k) = (setting == Setting::Supervised, train_quota[c]);
        let need = train_k + val_k + test_k;
        if need > nodes.len() {
            return Err(Error::Split {
                class: c,
                msg: format!(
                    "needs {train_k} train + {val_k} val + {test_k} test nodes but has {}",
                    nodes.len()
                ),
            });
        }
        let (train, rest) = if eval_first {
            let (ev, tr) = nodes.split_at(val_k + test_k);
            (&tr[..train_k], ev)
        } else {
            let (tr, ev) = nodes.split_at(train_k);
            (tr, &ev[..val_k + test_k])
        };
        train.iter().for_each(|&i| masks.train[i] = true);
        rest[..val_k].iter().for_each(|&i| masks.val[i] = true);
        rest[val_k..].iter().for_each(|&i| masks.test[i] = true);
    }
    Ok(masks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Matrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn labeled(sizes: &[usize]) -> Graph {
        let labels: Vec<usize> = sizes
            .iter()
            .enumerate()
            .flat_map(|(c, &s)| std::iter::repeat_n(c, s))
            .collect();
        let n = labels.len();
        Graph::from_edge_list(&[], n, Matrix::zeros(n, 1), Some(labels)).unwrap()
    }

    #[test]
    fn minority_gets_scaled_quota() {
        let g = labeled(&[100, 100, 100]);
        let spec = ImbalanceSpec::new(vec![2], 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = make_imbalanced_split(&g, &spec, Setting::Semi, EvalQuota::PerClass { val: 10, test: 20 }, &mut rng).unwrap();
        let counts = g.class_counts(Some(&m.train)).unwrap();
        assert_eq!(counts, vec![20, 20, 2]);
        assert_eq!(g.class_counts(Some(&m.val)).unwrap(), vec![10, 10, 10]);
        assert_eq!(g.class_counts(Some(&m.test)).unwrap(), vec![20, 20, 20]);
        m.validate(g.num_nodes()).unwrap();
    }

    #[test]
    fn balanced_ratio_gives_equal_quotas() {
        let g = labeled(&[50, 50]);
        let spec = ImbalanceSpec::new(vec![1], 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = make_imbalanced_split(&g, &spec, Setting::Semi, EvalQuota::default(), &mut rng).unwrap();
        assert_eq!(g.class_counts(Some(&m.train)).unwrap(), vec![20, 20]);
    }

    #[test]
    fn infeasible_quota_names_class() {
        let g = labeled(&[100, 5]);
        let spec = ImbalanceSpec::new(vec![0], 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let err = make_imbalanced_split(&g, &spec, Setting::Semi, EvalQuota::default(), &mut rng)
            .unwrap_err();
        assert!(matches!(err, Error::Split { class: 1, .. }), "{err}");
    }

    #[test]
    fn supervised_split_downsamples_minority() {
        let g = labeled(&[200, 200, 100]);
        let spec = ImbalanceSpec::new(vec![2], 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = make_imbalanced_split(&g, &spec, Setting::Supervised, EvalQuota::Fraction { val: 0.1, test: 0.2 }, &mut rng).unwrap();
        let train = g.class_counts(Some(&m.train)).unwrap();
        assert_eq!(train, vec![140, 140, 14]);
        assert_eq!(g.class_counts(Some(&m.val)).unwrap(), vec![10, 10, 10]);
        assert_eq!(g.class_counts(Some(&m.test)).unwrap(), vec![20, 20, 20]);
        m.validate(g.num_nodes()).unwrap();
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let g = labeled(&[60, 60, 30]);
        let spec = ImbalanceSpec::new(vec![1, 2], 0.3);
        let run = |s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            make_imbalanced_split(&g, &spec, Setting::Semi, EvalQuota::default(), &mut rng).unwrap()
        };
        assert_eq!(run(7), run(7));
    }
}
