use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::nn::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Corner {
    TopLeft,
    TopRight,
    BottomLeft,
    #[default]
    BottomRight,
}

/// A square block of maximum intensity stamped into one corner of every
/// channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriggerSpec {
    pub block_size: usize,
    pub corner: Corner,
    pub target_label: usize,
}

impl Default for TriggerSpec {
    fn default() -> Self {
        Self {
            block_size: 3,
            corner: Corner::BottomRight,
            target_label: 0,
        }
    }
}

impl TriggerSpec {
    fn check(&self, data: &Dataset) -> Result<()> {
        if self.block_size == 0 {
            return Err(Error::arg("trigger block size must be positive"));
        }
        if self.target_label >= data.num_classes() {
            return Err(Error::arg(format!(
                "target label {} outside [0, {})",
                self.target_label,
                data.num_classes()
            )));
        }
        if let Some(shape) = data.input_shape() {
            let (h, w) = match shape {
                [_, h, w] => (*h, *w),
                _ => return Err(Error::dim(format!("cannot stamp a {shape:?} input"))),
            };
            if self.block_size > h || self.block_size > w {
                return Err(Error::arg(format!(
                    "{0}x{0} trigger does not fit a {h}x{w} image",
                    self.block_size
                )));
            }
        }
        Ok(())
    }

    /// Returns a stamped copy of `x`.
    pub fn stamp(&self, x: &Tensor) -> Result<Tensor> {
        let (c, h, w) = match x.shape() {
            [c, h, w] => (*c, *h, *w),
            s => return Err(Error::dim(format!("cannot stamp a {s:?} input"))),
        };
        let b = self.block_size;
        if b == 0 || b > h || b > w {
            return Err(Error::arg(format!(
                "{b}x{b} trigger does not fit a {h}x{w} image"
            )));
        }
        let (r0, c0) = match self.corner {
            Corner::TopLeft => (0, 0),
            Corner::TopRight => (0, w - b),
            Corner::BottomLeft => (h - b, 0),
            Corner::BottomRight => (h - b, w - b),
        };
        let mut out = x.clone();
        let v = out.values_mut();
        for ch in 0..c {
            for r in r0..r0 + b {
                let row = ch * h * w + r * w;
                v[row + c0..row + c0 + b].iter_mut().for_each(|p| *p = 1.0);
            }
        }
        Ok(out)
    }
}

/// Stamps the first `round(fraction * n)` examples and relabels them to the
/// target. Returns `(poisoned, untouched_rest)`; `data` is left as is.
pub fn apply_trigger(
    data: &Dataset,
    trigger: &TriggerSpec,
    fraction: f64,
) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::arg(format!(
            "poison fraction must lie in (0, 1], got {fraction}"
        )));
    }
    trigger.check(data)?;
    let k = (fraction * data.len() as f64).round() as usize;
    let (head, rest) = data.split_at(k)?;
    let inputs = head
        .inputs()
        .iter()
        .map(|x| trigger.stamp(x))
        .collect::<Result<Vec<_>>>()?;
    let poisoned = Dataset::new(
        format!("{}-trigger", data.name()),
        inputs,
        vec![trigger.target_label; k],
        data.num_classes(),
    )?;
    Ok((poisoned, rest))
}

/// Backdoor evaluation set: every example whose true label differs from the
/// target, stamped and labelled with the target.
pub fn trigger_test_set(test: &Dataset, trigger: &TriggerSpec) -> Result<Dataset> {
    trigger.check(test)?;
    let mut inputs = Vec::new();
    for (x, &l) in test.inputs().iter().zip(test.labels()) {
        if l != trigger.target_label {
            inputs.push(trigger.stamp(x)?);
        }
    }
    let n = inputs.len();
    Dataset::new(
        format!("{}-trigger-test", test.name()),
        inputs,
        vec![trigger.target_label; n],
        test.num_classes(),
    )
}

/// Chooses the subpopulation a relabeling backdoor targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Selector {
    /// Every example of a class.
    Class { class: usize },
    /// A random `fraction` of one class, with `shift` added to every feature
    /// so the group is rare and distinct.
    Tail {
        class: usize,
        fraction: f64,
        shift: f64,
        seed: u64,
    },
    /// Explicit example indices.
    Indices { indices: Vec<usize> },
}

/// A backdoor built from a relabeled subpopulation.
#[derive(Debug, Clone, PartialEq)]
pub struct BackdoorTask {
    pub target_label: usize,
    /// Training-side poison, relabeled to the target.
    pub poison: Dataset,
    /// Held-out members of the same subpopulation, labelled with the target.
    pub test_set: Dataset,
    /// Indices into the source dataset of every selected example.
    pub source_indices: Vec<usize>,
}

/// Splits the selected subpopulation alternately into training poison and a
/// disjoint test set, both relabeled to `target_label`.
pub fn make_subpopulation_backdoor(
    data: &Dataset,
    selector: &Selector,
    target_label: usize,
) -> Result<BackdoorTask> {
    if target_label >= data.num_classes() {
        return Err(Error::arg(format!(
            "target label {target_label} out of range"
        )));
    }
    let class_members = |class: usize| -> Result<Vec<usize>> {
        if class >= data.num_classes() {
            return Err(Error::arg(format!("class {class} out of range")));
        }
        Ok((0..data.len())
            .filter(|&i| data.labels()[i] == class)
            .collect())
    };
    let (indices, shift) = match selector {
        Selector::Class { class } => (class_members(*class)?, 0.0),
        Selector::Tail {
            class,
            fraction,
            shift,
            seed,
        } => {
            if !(*fraction > 0.0 && *fraction <= 1.0) || !shift.is_finite() {
                return Err(Error::arg(
                    "tail fraction must lie in (0, 1] and shift be finite",
                ));
            }
            let members = class_members(*class)?;
            let k = (fraction * members.len() as f64).round() as usize;
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut picked: Vec<usize> = sample(&mut rng, members.len(), k.min(members.len()))
                .into_iter()
                .map(|j| members[j])
                .collect();
            picked.sort_unstable();
            (picked, *shift)
        }
        Selector::Indices { indices } => {
            let mut v = indices.clone();
            v.sort_unstable();
            v.dedup();
            (v, 0.0)
        }
    };
    if indices.is_empty() {
        return Err(Error::arg("the selector picks no examples"));
    }
    if indices.len() < 2 {
        return Err(Error::arg(
            "need at least two examples to split into poison and test",
        ));
    }
    if let Some(&i) = indices.iter().find(|&&i| i >= data.len()) {
        return Err(Error::arg(format!("index {i} out of range")));
    }
    if indices.iter().any(|&i| data.labels()[i] == target_label) {
        return Err(Error::arg(
            "target label equals the original label of a selected example",
        ));
    }

    let build = |name: &str, idx: Vec<usize>| -> Result<Dataset> {
        let inputs = idx
            .iter()
            .map(|&i| {
                let x = &data.inputs()[i];
                Tensor::new(
                    x.shape().to_vec(),
                    x.values().iter().map(|v| v + shift).collect(),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let n = inputs.len();
        Dataset::new(name, inputs, vec![target_label; n], data.num_classes())
    };
    let train: Vec<usize> = indices.iter().copied().step_by(2).collect();
    let test: Vec<usize> = indices.iter().copied().skip(1).step_by(2).collect();
    Ok(BackdoorTask {
        target_label,
        poison: build("subpopulation-poison", train)?,
        test_set: build("subpopulation-test", test)?,
        source_indices: indices,
    })
}
