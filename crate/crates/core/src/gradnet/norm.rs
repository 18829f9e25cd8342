/// Per-feature running mean and variance (Welford) for input normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningNorm {
    count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

const MIN_STD: f64 = 1e-6;

impl RunningNorm {
    pub fn new(dim: usize) -> Self {
        RunningNorm {
            count: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn from_parts(count: u64, mean: Vec<f64>, m2: Vec<f64>) -> Self {
        assert_eq!(mean.len(), m2.len());
        RunningNorm { count, mean, m2 }
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Sum of squared deviations per feature.
    pub fn m2(&self) -> &[f64] {
        &self.m2
    }

    pub fn update(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.dim());
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let d = v - *m;
            *m += d / n;
            *s += d * (v - *m);
        }
    }

    pub fn std(&self) -> Vec<f64> {
        if self.count < 2 {
            return vec![1.0; self.dim()];
        }
        self.m2
            .iter()
            .map(|s| (s / self.count as f64).sqrt().max(MIN_STD))
            .collect()
    }

    /// Identity until two observations have been seen.
    pub fn normalize_into(&self, x: &[f64], out: &mut [f64]) {
        if self.count < 2 {
            out.copy_from_slice(x);
            return;
        }
        for (((o, &v), m), s) in out.iter_mut().zip(x).zip(&self.mean).zip(self.std()) {
            *o = (v - m) / s;
        }
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.normalize_into(x, &mut out);
        out
    }
}
