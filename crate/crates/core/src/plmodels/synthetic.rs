//! Synthetic ABG / CI dataset generation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, ModelKind, Provenance};
use super::models::{eval_abg, eval_ci, AbgParams, CiParams};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamRange {
    pub lo: f64,
    pub hi: f64,
}

impl ParamRange {
    pub const fn new(lo: f64, hi: f64) -> Self {
        ParamRange { lo, hi }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        if self.lo == self.hi {
            return self.lo;
        }
        Uniform::new_inclusive(self.lo, self.hi).expect("validated range").sample(rng)
    }
}

/// Sampling ranges for the synthetic generators. Frequency is in GHz here
/// regardless of model; CI datasets store it converted to Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamRanges {
    pub alpha: ParamRange,
    pub beta: ParamRange,
    pub gamma: ParamRange,
    pub f_ghz: ParamRange,
    pub d_m: ParamRange,
    pub sigma: ParamRange,
    pub n: ParamRange,
}

impl Default for ParamRanges {
    fn default() -> Self {
        ParamRanges {
            alpha: ParamRange::new(0.1, 2.5),
            beta: ParamRange::new(-10.0, -1.0),
            gamma: ParamRange::new(0.0, 2.0),
            f_ghz: ParamRange::new(2.0, 73.5),
            d_m: ParamRange::new(1.0, 500.0),
            sigma: ParamRange::new(4.0, 12.0),
            n: ParamRange::new(2.0, 6.0),
        }
    }
}

impl ParamRanges {
    fn named(&self) -> [(&'static str, ParamRange); 7] {
        [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("f_ghz", self.f_ghz),
            ("d_m", self.d_m),
            ("sigma", self.sigma),
            ("n", self.n),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub model: ModelKind,
    #[serde(default)]
    pub ranges: ParamRanges,
    pub count: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(model: ModelKind, count: usize, seed: u64) -> Self {
        SyntheticSpec { model, ranges: ParamRanges::default(), count, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::Config("synthetic count must be >= 1".into()));
        }
        for (name, r) in self.ranges.named() {
            if !(r.lo.is_finite() && r.hi.is_finite() && r.lo <= r.hi) {
                return Err(Error::Config(format!("range for {name} must satisfy lo <= hi, got [{}, {}]", r.lo, r.hi)));
            }
        }
        let r = &self.ranges;
        if r.d_m.lo <= 0.0 || r.f_ghz.lo <= 0.0 {
            return Err(Error::Config("distance and frequency ranges must be positive".into()));
        }
        if r.sigma.lo < 0.0 {
            return Err(Error::Config("sigma range must be non-negative".into()));
        }
        if self.model == ModelKind::Ci && r.n.lo <= 0.0 {
            return Err(Error::Config("pathloss exponent range must be positive".into()));
        }
        Ok(())
    }

    pub fn feature_names(&self) -> Vec<String> {
        let names: &[&str] = match self.model {
            ModelKind::Abg => &["alpha", "beta", "gamma", "f", "d", "chi"],
            ModelKind::Ci => &["f", "n", "d", "chi"],
        };
        names.iter().map(|s| s.to_string()).collect()
    }
}

fn shadow<R: Rng>(sigma: f64, rng: &mut R) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, sigma).expect("validated sigma").sample(rng)
}

/// Draws `count` rows. Every parameter is uniform over its range; the shadow
/// term is drawn from N(0, sigma) with a per-row uniform sigma, and only the
/// shadow draw is stored as a feature.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let r = &spec.ranges;
    let mut rows = Vec::with_capacity(spec.count);
    let mut target = Vec::with_capacity(spec.count);
    for _ in 0..spec.count {
        match spec.model {
            ModelKind::Abg => {
                let alpha = r.alpha.sample(&mut rng);
                let beta = r.beta.sample(&mut rng);
                let gamma = r.gamma.sample(&mut rng);
                let f_ghz = r.f_ghz.sample(&mut rng);
                let d_m = r.d_m.sample(&mut rng);
                let sigma = r.sigma.sample(&mut rng);
                let chi = shadow(sigma, &mut rng);
                let p = AbgParams { alpha, beta, gamma, f_ghz, d_m, chi };
                target.push(eval_abg(&p)?);
                rows.push(vec![alpha, beta, gamma, f_ghz, d_m, chi]);
            }
            ModelKind::Ci => {
                let f_hz = r.f_ghz.sample(&mut rng) * 1e9;
                let n = r.n.sample(&mut rng);
                let d_m = r.d_m.sample(&mut rng);
                let sigma = r.sigma.sample(&mut rng);
                let chi = shadow(sigma, &mut rng);
                let p = CiParams { f_hz, n, d_m, chi };
                target.push(eval_ci(&p)?);
                rows.push(vec![f_hz, n, d_m, chi]);
            }
        }
    }
    Dataset::new(
        spec.feature_names(),
        rows,
        target,
        Provenance::Synthetic { model: spec.model, seed: spec.seed, sampling: "uniform".into() },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn abg_shape() {
        let ds = generate_synthetic(&SyntheticSpec::new(ModelKind::Abg, 1000, 7)).unwrap();
        assert_eq!(ds.n_rows(), 1000);
        assert_eq!(ds.feature_names, vec!["alpha", "beta", "gamma", "f", "d", "chi"]);
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = SyntheticSpec::new(ModelKind::Ci, 200, 11);
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&SyntheticSpec { seed: 12, ..spec }).unwrap();
        assert_ne!(a.rows, c.rows);
    }

    #[test]
    fn targets_recompute_exactly() {
        let abg = generate_synthetic(&SyntheticSpec::new(ModelKind::Abg, 500, 1)).unwrap();
        for (r, y) in abg.rows.iter().zip(&abg.target) {
            let p = AbgParams { alpha: r[0], beta: r[1], gamma: r[2], f_ghz: r[3], d_m: r[4], chi: r[5] };
            assert_eq!(eval_abg(&p).unwrap(), *y);
        }
        let ci = generate_synthetic(&SyntheticSpec::new(ModelKind::Ci, 500, 1)).unwrap();
        for (r, y) in ci.rows.iter().zip(&ci.target) {
            let p = CiParams { f_hz: r[0], n: r[1], d_m: r[2], chi: r[3] };
            assert_eq!(eval_ci(&p).unwrap(), *y);
        }
    }

    #[test]
    fn ci_frequency_in_hz_and_in_range() {
        let spec = SyntheticSpec::new(ModelKind::Ci, 300, 5);
        let ds = generate_synthetic(&spec).unwrap();
        for r in &ds.rows {
            assert!(r[0] >= 2e9 && r[0] <= 73.5e9);
            assert!(spec.ranges.n.contains(r[1]));
            assert!(spec.ranges.d_m.contains(r[2]));
        }
    }

    #[test]
    fn rejects_bad_spec() {
        let mut spec = SyntheticSpec::new(ModelKind::Abg, 0, 1);
        assert!(generate_synthetic(&spec).is_err());
        spec.count = 5;
        spec.ranges.alpha = ParamRange::new(3.0, 1.0);
        assert!(generate_synthetic(&spec).is_err());
    }

    #[test]
    fn spec_parses_from_toml() {
        let spec: SyntheticSpec =
            toml::from_str("model = \"ci\"\ncount = 10\nseed = 3\n[ranges]\nd_m = { lo = 1.0, hi = 100.0 }\n").unwrap();
        assert_eq!(spec.model, ModelKind::Ci);
        assert_eq!(spec.ranges.d_m, ParamRange::new(1.0, 100.0));
        assert_eq!(spec.ranges.alpha, ParamRanges::default().alpha);
    }
}
