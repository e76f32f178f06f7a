use serde::{Deserialize, Serialize};
use synthasr_nn::Tensor;

/// Per-bin mean and standard deviation of the training spectrograms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MelNorm {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl MelNorm {
    pub fn identity(n_mels: usize) -> Self {
        Self {
            mean: vec![0.0; n_mels],
            std: vec![1.0; n_mels],
        }
    }

    pub fn fit<'a>(mels: impl IntoIterator<Item = &'a Tensor<f32>>, n_mels: usize) -> Self {
        let mut sum = vec![0.0f64; n_mels];
        let mut sq = vec![0.0f64; n_mels];
        let mut count = 0.0;
        for m in mels {
            for r in 0..m.rows() {
                for (c, &v) in m.row(r).iter().enumerate() {
                    sum[c] += v as f64;
                    sq[c] += (v as f64).powi(2);
                }
            }
            count += m.rows() as f64;
        }
        if count == 0.0 {
            return Self::identity(n_mels);
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count).collect();
        Self {
            std: sq
                .iter()
                .zip(&mean)
                .map(|(q, m)| (q / count - m * m).max(1e-4).sqrt() as f32)
                .collect(),
            mean: mean.into_iter().map(|m| m as f32).collect(),
        }
    }

    pub fn normalize(&self, mel: &Tensor<f32>) -> Tensor<f32> {
        Tensor::from_fn(mel.rows(), mel.cols(), |r, c| (mel.get(r, c) - self.mean[c]) / self.std[c])
    }

    pub fn denormalize(&self, mel: &Tensor<f32>) -> Tensor<f32> {
        Tensor::from_fn(mel.rows(), mel.cols(), |r, c| mel.get(r, c) * self.std[c] + self.mean[c])
    }
}
