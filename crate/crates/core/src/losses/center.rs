//! Center loss and the mini-batch center update.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{ensure, Error, Result};

/// One center per global identity, in signature space.
#[derive(Debug, Clone, PartialEq)]
pub struct Centers {
    matrix: Array2<f64>,
}

impl Centers {
    pub fn zeros(num_identities: usize, dim: usize) -> Self {
        Self { matrix: Array2::zeros((num_identities, dim)) }
    }

    pub fn from_matrix(matrix: Array2<f64>) -> Result<Self> {
        ensure!(matrix.iter().all(|v| v.is_finite()), Error::NonFinite("centers".into()));
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn num_identities(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    fn check(&self, features: ArrayView2<f64>, labels: &[usize]) -> Result<()> {
        ensure!(
            features.ncols() == self.dim(),
            Error::Shape(format!("features have dimension {}, centers {}", features.ncols(), self.dim()))
        );
        ensure!(
            features.nrows() == labels.len(),
            Error::Shape(format!("{} feature rows for {} labels", features.nrows(), labels.len()))
        );
        for &y in labels {
            ensure!(y < self.num_identities(), Error::LabelOutOfRange { label: y, classes: self.num_identities() });
        }
        Ok(())
    }

    /// Move each center present in the batch toward the mean of its
    /// features: `delta_j = sum_i (c_j - x_i) / (1 + n_j)`,
    /// `c_j <- c_j - rate * delta_j`.
    pub fn update(&mut self, features: ArrayView2<f64>, labels: &[usize], rate: f64) -> Result<()> {
        ensure!(
            rate > 0.0 && rate <= 1.0,
            Error::InvalidArgument(format!("center learning rate must lie in (0, 1], got {rate}"))
        );
        self.check(features, labels)?;
        let mut acc: BTreeMap<usize, (Array1<f64>, usize)> = BTreeMap::new();
        for (i, &y) in labels.iter().enumerate() {
            let entry = acc.entry(y).or_insert_with(|| (Array1::zeros(self.dim()), 0));
            entry.0 += &(&self.matrix.row(y) - &features.row(i));
            entry.1 += 1;
        }
        for (y, (sum, n)) in acc {
            let delta = sum / (1.0 + n as f64);
            let mut c = self.matrix.row_mut(y);
            c.scaled_add(-rate, &delta);
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CenterLoss {
    /// Sum over the batch of squared distances to the class centers.
    pub value: f64,
    /// d value / d features; centers are held constant.
    pub grad: Array2<f64>,
}

pub fn center_loss(features: ArrayView2<f64>, labels: &[usize], centers: &Centers) -> Result<CenterLoss> {
    centers.check(features, labels)?;
    let mut grad = Array2::zeros(features.raw_dim());
    let mut value = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let diff = &features.row(i) - &centers.matrix.row(y);
        value += diff.dot(&diff);
        grad.row_mut(i).assign(&(diff * 2.0));
    }
    Ok(CenterLoss { value, grad })
}

pub fn update_centers(centers: &mut Centers, features: ArrayView2<f64>, labels: &[usize], cs_alpha: f64) -> Result<()> {
    centers.update(features, labels, cs_alpha)
}
