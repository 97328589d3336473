use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Stream ids are split as `purpose:8 | site:4 | scan:12 | index:40`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamId {
    pub purpose: u8,
    pub site: u8,
    pub scan: u16,
    pub index: u64,
}

impl StreamId {
    pub fn encode(&self) -> u64 {
        ((self.purpose as u64) << 56)
            | (((self.site & 0xf) as u64) << 52)
            | (((self.scan & 0xfff) as u64) << 40)
            | (self.index & ((1 << 40) - 1))
    }
}

/// Independent, position-addressed random stream: the same `(seed, id)`
/// always yields the same sequence, whatever order streams are visited in.
pub fn stream_rng(seed: u64, id: StreamId) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id.encode());
    rng
}

/// Magnitude of `s + n1 + i n2` with `n1, n2 ~ N(0, sigma^2)`.
pub fn add_rician_noise<R: Rng + ?Sized>(signals: &[f64], sigma: f64, rng: &mut R) -> Vec<f64> {
    assert!(sigma >= 0.0, "noise sigma must be non-negative");
    if sigma == 0.0 {
        return signals.to_vec();
    }
    signals
        .iter()
        .map(|&s| {
            let n1: f64 = rng.sample(StandardNormal);
            let n2: f64 = rng.sample(StandardNormal);
            let re = s + sigma * n1;
            let im = sigma * n2;
            re.hypot(im)
        })
        .collect()
}
