//! Piecewise regression model for net delays and its least-squares fit.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{MacroKind, RegionRef};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CascadeEntry {
    pub kind: MacroKind,
    pub ns: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionPenalty {
    pub a: usize,
    pub b: usize,
    pub ns: f64,
}

/// Extra delay for nets whose endpoints sit in different placement regions.
/// Pairs are unordered; the diagonal is always zero.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BlockagePenalty {
    pub default_ns: f64,
    #[serde(default)]
    pub pairs: Vec<RegionPenalty>,
}

impl BlockagePenalty {
    pub fn lookup(&self, a: RegionRef, b: RegionRef) -> f64 {
        match (a, b) {
            (RegionRef::Region(x), RegionRef::Region(y)) => {
                if x == y {
                    return 0.0;
                }
                self.pairs.iter().find(|p| (p.a == x && p.b == y) || (p.a == y && p.b == x)).map_or(self.default_ns, |p| p.ns)
            }
            _ => self.default_ns,
        }
    }
}

/// Parameters of the piecewise net-delay function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelayModelParams {
    /// Lower Euclidean-distance bound of each interval; the first is 0 and
    /// the last interval is open-ended.
    pub breakpoints: Vec<f64>,
    /// `[a0, a1, a2, a3]` per interval, in ns.
    pub coeffs: Vec<[f64; 4]>,
    pub b0: f64,
    pub b1: f64,
    #[serde(default)]
    pub cascade: Vec<CascadeEntry>,
    #[serde(default)]
    pub blockage: BlockagePenalty,
}

impl Default for DelayModelParams {
    /// Coefficients for the bundled synthetic device.
    fn default() -> Self {
        DelayModelParams {
            breakpoints: vec![0.0, 3.0, 6.0],
            coeffs: vec![[0.04, 0.06, 0.05, 0.05], [0.03, 0.08, 0.03, 0.08], [0.02, 0.10, 0.02, 0.10]],
            b0: 0.3,
            b1: 0.5,
            cascade: vec![
                CascadeEntry { kind: MacroKind::CarryChain, ns: 0.10 },
                CascadeEntry { kind: MacroKind::DspCascade, ns: 0.30 },
                CascadeEntry { kind: MacroKind::BramCascade, ns: 0.30 },
                CascadeEntry { kind: MacroKind::MuxTree, ns: 0.05 },
                CascadeEntry { kind: MacroKind::LutramGroup, ns: 0.05 },
            ],
            blockage: BlockagePenalty { default_ns: 0.8, pairs: vec![] },
        }
    }
}

/// Location of one end of a net for delay evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PinLoc {
    pub x: f64,
    pub y: f64,
    pub region: RegionRef,
}

impl DelayModelParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Schema(format!("delay model: {m}")));
        if self.breakpoints.first() != Some(&0.0) {
            return bad("first breakpoint must be 0");
        }
        if self.breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return bad("breakpoints must increase");
        }
        if self.coeffs.len() != self.breakpoints.len() {
            return bad("one coefficient row per interval");
        }
        if self.coeffs.iter().flatten().any(|&a| !(a >= 0.0)) {
            return bad("coefficients must be non-negative");
        }
        if !(0.0 < self.b0 && self.b0 < self.b1 && self.b1 <= 1.0) {
            return bad("exponents need 0 < b0 < b1 <= 1");
        }
        Ok(())
    }

    pub fn interval_of(&self, dist: f64) -> usize {
        self.breakpoints.iter().rposition(|&b| dist >= b).unwrap_or(0)
    }

    pub fn cascade_ns(&self, kind: MacroKind) -> f64 {
        self.cascade.iter().find(|c| c.kind == kind).map_or(0.0, |c| c.ns)
    }

    /// The four regression terms for a displacement.
    pub fn terms(&self, dx: f64, dy: f64) -> [f64; 4] {
        [pow(dx, self.b0), pow(dx, self.b1), pow(dy, self.b0), pow(dy, self.b1)]
    }

    /// Net delay between two pins in ns, clamped at zero.
    pub fn eval(&self, src: PinLoc, dst: PinLoc, cascade: Option<MacroKind>) -> f64 {
        let dx = (src.x - dst.x).abs();
        let dy = (src.y - dst.y).abs();
        let a = &self.coeffs[self.interval_of(dx.hypot(dy))];
        let t = self.terms(dx, dy);
        let raw = a[0] * t[0] + a[1] * t[1] + a[2] * t[2] + a[3] * t[3] - cascade.map_or(0.0, |k| self.cascade_ns(k))
            + self.blockage.lookup(src.region, dst.region);
        raw.max(0.0)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let p: DelayModelParams = crate::model::io::read_json(path)?;
        p.validate()?;
        Ok(p)
    }
}

fn pow(v: f64, e: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else if e == 0.5 {
        v.sqrt()
    } else {
        v.powf(e)
    }
}

/// Free-standing form of [`DelayModelParams::eval`].
pub fn eval_net_delay(params: &DelayModelParams, src: PinLoc, dst: PinLoc, cascade: Option<MacroKind>) -> f64 {
    params.eval(src, dst, cascade)
}

/// One measured net delay. Regions are region indices on the sampled device.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelaySample {
    pub dx: f64,
    pub dy: f64,
    pub region_src: usize,
    pub region_dst: usize,
    #[serde(default, with = "cascade_column")]
    pub cascade: Option<MacroKind>,
    pub delay_ns: f64,
}

mod cascade_column {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::model::MacroKind;

    pub fn serialize<S: Serializer>(v: &Option<MacroKind>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            None => s.serialize_str(""),
            Some(k) => s.serialize_str(&k.to_string()),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<MacroKind>, D::Error> {
        let s = String::deserialize(d)?;
        if s.trim().is_empty() {
            return Ok(None);
        }
        serde_json::from_value(serde_json::Value::String(s.trim().to_string())).map(Some).map_err(serde::de::Error::custom)
    }
}

/// Reads a `dx,dy,region_src,region_dst,cascade,delay_ns` CSV.
pub fn read_samples_csv(path: &Path) -> Result<Vec<DelaySample>> {
    let mut rdr = csv::Reader::from_path(path)?;
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn write_samples_csv(path: &Path, samples: &[DelaySample]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for s in samples {
        w.serialize(s)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitConfig {
    pub breakpoints: Vec<f64>,
    pub b0: f64,
    pub b1: f64,
    pub cascade: Vec<CascadeEntry>,
    pub blockage: BlockagePenalty,
    pub min_samples: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        let d = DelayModelParams::default();
        FitConfig { breakpoints: d.breakpoints, b0: d.b0, b1: d.b1, cascade: d.cascade, blockage: d.blockage, min_samples: 50 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DelayFit {
    pub params: DelayModelParams,
    /// Mean absolute residual over all samples, in ns.
    pub mean_abs_error: f64,
    /// Standard deviation of the residuals, in ns.
    pub residual_std: f64,
    pub samples_per_interval: Vec<usize>,
}

/// Fits the per-interval coefficients by linear least squares against the
/// four power terms, after removing the cascade and blockage table terms.
///
/// Negative fitted coefficients are kept as fitted (the model stays a plain
/// least-squares estimate); [`DelayModelParams::validate`] will flag them.
pub fn fit_delay_model(samples: &[DelaySample], config: &FitConfig) -> Result<DelayFit> {
    let k = config.breakpoints.len();
    let mut params = DelayModelParams {
        breakpoints: config.breakpoints.clone(),
        coeffs: vec![[0.0; 4]; k],
        b0: config.b0,
        b1: config.b1,
        cascade: config.cascade.clone(),
        blockage: config.blockage.clone(),
    };
    let mut buckets: Vec<Vec<&DelaySample>> = vec![Vec::new(); k];
    for s in samples {
        buckets[params.interval_of(s.dx.hypot(s.dy))].push(s);
    }
    for (interval, bucket) in buckets.iter().enumerate() {
        if bucket.len() < config.min_samples {
            return Err(Error::InsufficientSamples { interval, found: bucket.len(), needed: config.min_samples });
        }
        let n = bucket.len();
        let mut a = DMatrix::<f64>::zeros(n, 4);
        let mut y = DVector::<f64>::zeros(n);
        for (r, s) in bucket.iter().enumerate() {
            let t = params.terms(s.dx, s.dy);
            for c in 0..4 {
                a[(r, c)] = t[c];
            }
            y[r] = s.delay_ns - target_offset(&params, s);
        }
        params.coeffs[interval] = solve_least_squares(a, y).ok_or(Error::RankDeficient { interval })?;
    }

    let residuals: Vec<f64> = samples.iter().map(|s| s.delay_ns - predict(&params, s)).collect();
    let n = residuals.len().max(1) as f64;
    let mean_abs_error = residuals.iter().map(|r| r.abs()).sum::<f64>() / n;
    let mean = residuals.iter().sum::<f64>() / n;
    let residual_std = (residuals.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt();
    Ok(DelayFit { params, mean_abs_error, residual_std, samples_per_interval: buckets.iter().map(Vec::len).collect() })
}

/// Bkg - Cas for a sample: the part of the delay the table terms explain.
fn target_offset(params: &DelayModelParams, s: &DelaySample) -> f64 {
    params.blockage.lookup(RegionRef::Region(s.region_src), RegionRef::Region(s.region_dst))
        - s.cascade.map_or(0.0, |k| params.cascade_ns(k))
}

fn predict(params: &DelayModelParams, s: &DelaySample) -> f64 {
    let a = &params.coeffs[params.interval_of(s.dx.hypot(s.dy))];
    let t = params.terms(s.dx, s.dy);
    (a[0] * t[0] + a[1] * t[1] + a[2] * t[2] + a[3] * t[3] + target_offset(params, s)).max(0.0)
}

/// Least squares via SVD. A system whose design matrix and targets are both
/// identically zero yields zero coefficients; any other rank-deficient system
/// yields `None`.
fn solve_least_squares(a: DMatrix<f64>, y: DVector<f64>) -> Option<[f64; 4]> {
    let max_abs = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max_abs == 0.0 {
        return y.iter().all(|&v| v == 0.0).then_some([0.0; 4]);
    }
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin <= smax * 1e-10 {
        return None;
    }
    let x = svd.solve(&y, 0.0).ok()?;
    Some([x[0], x[1], x[2], x[3]])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn loc(x: f64, y: f64) -> PinLoc {
        PinLoc { x, y, region: RegionRef::Region(0) }
    }

    fn unit_params() -> DelayModelParams {
        DelayModelParams {
            breakpoints: vec![0.0, 3.0, 6.0],
            coeffs: vec![[1.0; 4]; 3],
            b0: 0.3,
            b1: 0.5,
            cascade: vec![CascadeEntry { kind: MacroKind::CarryChain, ns: 0.5 }],
            blockage: BlockagePenalty { default_ns: 0.7, pairs: vec![RegionPenalty { a: 0, b: 2, ns: 1.5 }] },
        }
    }

    #[test]
    fn zero_displacement_is_zero_delay() {
        assert_eq!(unit_params().eval(loc(2.0, 2.0), loc(2.0, 2.0), None), 0.0);
    }

    #[test]
    fn unit_step_in_x() {
        let d = unit_params().eval(loc(0.0, 0.0), loc(1.0, 0.0), None);
        assert!((d - 2.0).abs() < 1e-12);
    }

    #[test]
    fn cascade_deducts_and_clamps() {
        let p = unit_params();
        let plain = p.eval(loc(0.0, 0.0), loc(0.0, 1.0), None);
        let cas = p.eval(loc(0.0, 0.0), loc(0.0, 1.0), Some(MacroKind::CarryChain));
        assert!(cas <= plain);
        assert!((plain - cas - 0.5).abs() < 1e-12);
        assert_eq!(p.eval(loc(0.0, 0.0), loc(0.0, 0.0), Some(MacroKind::CarryChain)), 0.0);
    }

    #[test]
    fn region_penalty_table() {
        let p = unit_params();
        let a = PinLoc { x: 0.0, y: 0.0, region: RegionRef::Region(0) };
        let b = PinLoc { x: 0.0, y: 0.0, region: RegionRef::Region(2) };
        let c = PinLoc { x: 0.0, y: 0.0, region: RegionRef::Region(1) };
        assert_eq!(p.eval(a, a, None), 0.0);
        assert_eq!(p.eval(a, b, None), 1.5);
        assert_eq!(p.eval(b, a, None), 1.5);
        assert_eq!(p.eval(a, c, None), 0.7);
    }

    #[test]
    fn interval_selection() {
        let p = unit_params();
        assert_eq!(p.interval_of(0.0), 0);
        assert_eq!(p.interval_of(2.999), 0);
        assert_eq!(p.interval_of(3.0), 1);
        assert_eq!(p.interval_of(100.0), 2);
    }

    #[test]
    fn default_params_are_valid() {
        DelayModelParams::default().validate().unwrap();
    }

    #[test]
    fn json_round_trip() {
        let p = unit_params();
        let text = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<DelayModelParams>(&text).unwrap(), p);
    }

    #[test]
    fn monotone_within_intervals() {
        let p = DelayModelParams::default();
        for k in 0..200 {
            let base = k as f64 * 0.05;
            let d0 = p.eval(loc(0.0, 0.0), loc(base, 0.3), None);
            let d1 = p.eval(loc(0.0, 0.0), loc(base + 0.01, 0.3), None);
            if p.interval_of(base.hypot(0.3)) == p.interval_of((base + 0.01).hypot(0.3)) {
                assert!(d1 >= d0);
            }
        }
    }

    #[test]
    fn rank_deficient_interval_is_named() {
        // every sample in interval 1 has dy = 0, so the two dy columns vanish
        let mut samples = Vec::new();
        for i in 0..60 {
            let t = i as f64 / 60.0;
            samples.push(DelaySample { dx: 1.0 + t, dy: 0.5 * t, region_src: 0, region_dst: 0, cascade: None, delay_ns: t });
            samples.push(DelaySample { dx: 3.5 + t, dy: 0.0, region_src: 0, region_dst: 0, cascade: None, delay_ns: t });
            samples.push(DelaySample { dx: 7.0 + t, dy: 3.0 * t, region_src: 0, region_dst: 0, cascade: None, delay_ns: t });
        }
        let err = fit_delay_model(&samples, &FitConfig::default()).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { interval: 1 }), "{err}");
    }

    fn synthetic(truth: &DelayModelParams, count: usize, seed: u64) -> Vec<DelaySample> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                let (dx, dy): (f64, f64) = (rng.gen_range(0.0..12.0), rng.gen_range(0.0..12.0));
                let (rs, rd) = (rng.gen_range(0..3), rng.gen_range(0..3));
                let cascade = rng.gen_bool(0.2).then_some(MacroKind::CarryChain);
                let a = &truth.coeffs[truth.interval_of(dx.hypot(dy))];
                let t = truth.terms(dx, dy);
                let delay_ns = a[0] * t[0] + a[1] * t[1] + a[2] * t[2] + a[3] * t[3] - cascade.map_or(0.0, |k| truth.cascade_ns(k))
                    + truth.blockage.lookup(RegionRef::Region(rs), RegionRef::Region(rd));
                DelaySample { dx, dy, region_src: rs, region_dst: rd, cascade, delay_ns }
            })
            .collect()
    }

    #[test]
    fn recovers_noiseless_coefficients() {
        let mut truth = unit_params();
        truth.coeffs = vec![[1.0, 0.5, 1.0, 0.5], [0.8, 0.3, 0.6, 0.4], [0.2, 0.9, 0.1, 0.7]];
        let samples = synthetic(&truth, 3000, 9);
        let cfg = FitConfig {
            breakpoints: truth.breakpoints.clone(),
            b0: 0.3,
            b1: 0.5,
            cascade: truth.cascade.clone(),
            blockage: truth.blockage.clone(),
            min_samples: 50,
        };
        let fit = fit_delay_model(&samples, &cfg).unwrap();
        for (got, want) in fit.params.coeffs.iter().zip(&truth.coeffs) {
            for k in 0..4 {
                assert!((got[k] - want[k]).abs() < 1e-6, "{got:?} vs {want:?}");
            }
        }
        assert!(fit.mean_abs_error < 1e-6);
    }

    #[test]
    fn zero_samples_fit_zero_coefficients() {
        let mut truth = unit_params();
        truth.blockage = BlockagePenalty::default();
        truth.cascade.clear();
        let mut samples: Vec<_> = synthetic(&truth, 2000, 4).into_iter().filter(|s| s.dx.hypot(s.dy) >= 3.0).collect();
        samples.extend((0..60).map(|_| DelaySample { dx: 0.0, dy: 0.0, region_src: 0, region_dst: 0, cascade: None, delay_ns: 0.0 }));
        let cfg = FitConfig { cascade: vec![], blockage: BlockagePenalty::default(), ..FitConfig::default() };
        let fit = fit_delay_model(&samples, &cfg).unwrap();
        assert_eq!(fit.params.coeffs[0], [0.0; 4]);
    }

    #[test]
    fn too_few_samples() {
        let s = vec![DelaySample { dx: 1.0, dy: 1.0, region_src: 0, region_dst: 0, cascade: None, delay_ns: 0.3 }];
        assert!(matches!(fit_delay_model(&s, &FitConfig::default()), Err(Error::InsufficientSamples { interval: 0, .. })));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let samples = vec![
            DelaySample { dx: 1.0, dy: 2.5, region_src: 0, region_dst: 1, cascade: None, delay_ns: 0.25 },
            DelaySample { dx: 0.0, dy: 1.0, region_src: 1, region_dst: 1, cascade: Some(MacroKind::CarryChain), delay_ns: 0.05 },
        ];
        write_samples_csv(&path, &samples).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("dx,dy,region_src,region_dst,cascade,delay_ns"));
        assert_eq!(read_samples_csv(&path).unwrap(), samples);
    }
}
