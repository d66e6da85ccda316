//! Seeded random sampling shared by checks and tests.

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const DEFAULT_SEED: u64 = 42;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_box<R: Rng>(lo: &DVector<f64>, hi: &DVector<f64>, rng: &mut R) -> DVector<f64> {
    DVector::from_iterator(lo.len(), lo.iter().zip(hi.iter()).map(|(a, b)| a + (b - a) * rng.gen::<f64>()))
}

/// Uniform direction on the unit sphere of R^n.
pub fn unit_vector<R: Rng>(n: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let v = DVector::from_iterator(n, (0..n).map(|_| 2.0 * rng.gen::<f64>() - 1.0));
        let norm = v.norm();
        if norm > 1e-3 && norm <= 1.0 {
            return v / norm;
        }
    }
}

/// Uniform point in the ball of radius `radius` around `center`.
pub fn in_ball<R: Rng>(center: &DVector<f64>, radius: f64, rng: &mut R) -> DVector<f64> {
    let n = center.len();
    let dir = unit_vector(n, rng);
    let rad = radius * rng.gen::<f64>().powf(1.0 / n as f64);
    center + dir * rad
}

/// Points of the regular grid with spacing `step` covering `[lo, hi]`.
pub fn grid(lo: &DVector<f64>, hi: &DVector<f64>, step: f64) -> Vec<DVector<f64>> {
    let n = lo.len();
    let counts: Vec<usize> = (0..n).map(|i| ((hi[i] - lo[i]) / step).floor() as usize + 1).collect();
    let total: usize = counts.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; n];
    for _ in 0..total {
        out.push(DVector::from_iterator(n, (0..n).map(|i| lo[i] + idx[i] as f64 * step)));
        for i in 0..n {
            idx[i] += 1;
            if idx[i] < counts[i] {
                break;
            }
            idx[i] = 0;
        }
    }
    out
}
