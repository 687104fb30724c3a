use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Labelled examples. Every label is below `num_classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    inputs: Vec<Tensor>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        inputs: Vec<Tensor>,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        if inputs.len() != labels.len() {
            return Err(Error::dim(format!(
                "{} inputs but {} labels",
                inputs.len(),
                labels.len()
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::arg(format!("label {l} outside [0, {num_classes})")));
        }
        if let Some(first) = inputs.first() {
            if inputs.iter().any(|t| t.shape() != first.shape()) {
                return Err(Error::dim("inputs have differing shapes"));
            }
        }
        Ok(Self {
            name: name.into(),
            inputs,
            labels,
            num_classes,
        })
    }

    pub fn empty(name: impl Into<String>, num_classes: usize) -> Self {
        Self {
            name: name.into(),
            inputs: Vec::new(),
            labels: Vec::new(),
            num_classes,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn inputs(&self) -> &[Tensor] {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Shape of the inputs, if there are any.
    pub fn input_shape(&self) -> Option<&[usize]> {
        self.inputs.first().map(|t| t.shape())
    }

    /// Copies the examples at `indices`, in that order.
    pub fn subset(&self, name: impl Into<String>, indices: &[usize]) -> Result<Self> {
        if let Some(&i) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::arg(format!(
                "index {i} out of range for {} examples",
                self.len()
            )));
        }
        Ok(Self {
            name: name.into(),
            inputs: indices.iter().map(|&i| self.inputs[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        })
    }

    /// Examples of `self` followed by those of `other`.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.num_classes != other.num_classes {
            return Err(Error::dim("datasets disagree on the number of classes"));
        }
        let mut inputs = self.inputs.clone();
        inputs.extend(other.inputs.iter().cloned());
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Self::new(
            format!("{}+{}", self.name, other.name),
            inputs,
            labels,
            self.num_classes,
        )
    }

    /// Splits into the first `n` examples and the rest.
    pub fn split_at(&self, n: usize) -> Result<(Self, Self)> {
        let n = n.min(self.len());
        let head: Vec<usize> = (0..n).collect();
        let tail: Vec<usize> = (n..self.len()).collect();
        Ok((
            self.subset(format!("{}[..{n}]", self.name), &head)?,
            self.subset(format!("{}[{n}..]", self.name), &tail)?,
        ))
    }

    /// Number of examples per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

/// One client's local data. Only malicious clients carry poisoned examples.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientShard {
    pub client_id: usize,
    pub clean: Dataset,
    pub poisoned: Dataset,
    pub is_malicious: bool,
}

impl ClientShard {
    pub fn benign(client_id: usize, clean: Dataset) -> Self {
        let poisoned = Dataset::empty("poisoned", clean.num_classes());
        Self {
            client_id,
            clean,
            poisoned,
            is_malicious: false,
        }
    }

    pub fn malicious(client_id: usize, clean: Dataset, poisoned: Dataset) -> Result<Self> {
        if clean.num_classes() != poisoned.num_classes() {
            return Err(Error::dim(
                "clean and poisoned data disagree on the number of classes",
            ));
        }
        Ok(Self {
            client_id,
            clean,
            poisoned,
            is_malicious: true,
        })
    }

    pub fn len(&self) -> usize {
        self.clean.len() + self.poisoned.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The local training set: clean examples then poisoned ones.
    pub fn training_set(&self) -> Result<Dataset> {
        self.clean.concat(&self.poisoned)
    }
}
