use rand::Rng;
use serde::{Deserialize, Serialize};
use synthasr_nn::{rng, Real, Tensor};

/// `count` masks, each with a width drawn uniformly from
/// `min_width..=max_width` and a uniformly placed start.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskSpec {
    pub count: usize,
    pub min_width: usize,
    pub max_width: usize,
}

impl MaskSpec {
    pub const NONE: Self = Self {
        count: 0,
        min_width: 0,
        max_width: 0,
    };
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecAugmentConfig {
    pub time: MaskSpec,
    pub freq: MaskSpec,
}

impl SpecAugmentConfig {
    pub const NONE: Self = Self {
        time: MaskSpec::NONE,
        freq: MaskSpec::NONE,
    };

    /// Two frequency masks up to 15 bins and time masks up to 20 frames,
    /// one per 100 frames at most.
    pub fn default_asr() -> Self {
        Self {
            time: MaskSpec {
                count: 2,
                min_width: 0,
                max_width: 20,
            },
            freq: MaskSpec {
                count: 2,
                min_width: 0,
                max_width: 15,
            },
        }
    }

    pub fn is_identity(&self) -> bool {
        self.time.count == 0 && self.freq.count == 0
    }
}

/// Half-open ranges covered by the masks along one axis of length `dim`.
/// Widths beyond the axis are clamped to it.
fn draw(spec: &MaskSpec, dim: usize, r: &mut impl Rng) -> Vec<(usize, usize)> {
    (0..spec.count)
        .map(|_| {
            let lo = spec.min_width.min(spec.max_width);
            let w = r.random_range(lo..=spec.max_width).min(dim);
            let start = r.random_range(0..=dim - w);
            (start, start + w)
        })
        .collect()
}

/// Zero the masked time rows and frequency columns of a `T×F` matrix.
pub fn specaugment<R: Real>(mel: &Tensor<R>, cfg: &SpecAugmentConfig, seed: u64) -> Tensor<R> {
    let mut out = mel.clone();
    if cfg.is_identity() {
        return out;
    }
    let (t, f) = mel.shape();
    let mut r = rng(seed);
    let times = draw(&cfg.time, t, &mut r);
    let freqs = draw(&cfg.freq, f, &mut r);
    let data = out.data_mut();
    for (a, b) in times {
        data[a * f..b * f].fill(R::zero());
    }
    for (a, b) in freqs {
        for row in 0..t {
            data[row * f + a..row * f + b].fill(R::zero());
        }
    }
    out
}
