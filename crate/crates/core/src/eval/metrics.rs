use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcfParams {
    pub c_miss: f64,
    pub c_fa: f64,
    pub p_target: f64,
}

impl Default for DcfParams {
    fn default() -> Self {
        Self {
            c_miss: 10.0,
            c_fa: 1.0,
            p_target: 0.01,
        }
    }
}

impl DcfParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_miss > 0.0 && self.c_fa > 0.0) {
            return Err(Error::invalid("detection costs must be positive"));
        }
        if !(self.p_target > 0.0 && self.p_target <= 1.0) {
            return Err(Error::invalid("target prior must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn cost(&self, p_miss: f64, p_fa: f64) -> f64 {
        self.c_miss * p_miss * self.p_target + self.c_fa * p_fa * (1.0 - self.p_target)
    }
}

/// One point of the detection trade-off: trials are accepted when
/// `score > threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub p_miss: f64,
    pub p_fa: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetMetrics {
    pub eer: f64,
    pub min_dcf: f64,
    /// Ordered by increasing threshold, so `p_miss` rises and `p_fa` falls.
    pub points: Vec<OperatingPoint>,
}

fn check(targets: &[f64], nontargets: &[f64]) -> Result<()> {
    if targets.is_empty() || nontargets.is_empty() {
        return Err(Error::InsufficientData("both target and non-target scores are required".into()));
    }
    if targets.iter().chain(nontargets).any(|s| !s.is_finite()) {
        return Err(Error::Numerical("non-finite score".into()));
    }
    Ok(())
}

/// `-inf`, the midpoints between consecutive distinct scores, `+inf`.
pub fn candidate_thresholds(targets: &[f64], nontargets: &[f64]) -> Vec<f64> {
    let mut all: Vec<f64> = targets.iter().chain(nontargets).copied().collect();
    all.sort_by(f64::total_cmp);
    all.dedup();
    let mut out = Vec::with_capacity(all.len() + 1);
    out.push(f64::NEG_INFINITY);
    out.extend(all.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0));
    out.push(f64::INFINITY);
    out
}

/// Operating points at every candidate threshold by a single sorted sweep.
pub fn operating_points(targets: &[f64], nontargets: &[f64]) -> Result<Vec<OperatingPoint>> {
    check(targets, nontargets)?;
    let mut t = targets.to_vec();
    let mut n = nontargets.to_vec();
    t.sort_by(f64::total_cmp);
    n.sort_by(f64::total_cmp);
    let (nt, nn) = (t.len() as f64, n.len() as f64);
    let (mut it, mut inn) = (0, 0);
    let mut out = Vec::new();
    for th in candidate_thresholds(targets, nontargets) {
        while it < t.len() && t[it] <= th {
            it += 1;
        }
        while inn < n.len() && n[inn] <= th {
            inn += 1;
        }
        out.push(OperatingPoint {
            threshold: th,
            p_miss: it as f64 / nt,
            p_fa: (n.len() - inn) as f64 / nn,
        });
    }
    Ok(out)
}

/// Linear interpolation of the `p_miss = p_fa` crossing along an ordered
/// sequence of operating points.
pub fn eer_from_points(points: &[OperatingPoint]) -> f64 {
    let mut prev: Option<&OperatingPoint> = None;
    for p in points {
        let d = p.p_miss - p.p_fa;
        if d >= 0.0 {
            return match prev {
                Some(q) if d > 0.0 => {
                    let (dm, df) = (p.p_miss - q.p_miss, p.p_fa - q.p_fa);
                    let alpha = (q.p_fa - q.p_miss) / (dm - df);
                    q.p_miss + alpha * dm
                }
                _ => p.p_miss,
            };
        }
        prev = Some(p);
    }
    1.0
}

pub fn compute_eer(targets: &[f64], nontargets: &[f64]) -> Result<f64> {
    Ok(eer_from_points(&operating_points(targets, nontargets)?))
}

pub fn min_dcf_from_points(points: &[OperatingPoint], dcf: &DcfParams) -> f64 {
    points
        .iter()
        .map(|p| dcf.cost(p.p_miss, p.p_fa))
        .fold(f64::INFINITY, f64::min)
}

/// Unnormalised minimum detection cost.
pub fn compute_min_dcf(targets: &[f64], nontargets: &[f64], dcf: &DcfParams) -> Result<f64> {
    dcf.validate()?;
    Ok(min_dcf_from_points(&operating_points(targets, nontargets)?, dcf))
}

pub fn det_metrics(targets: &[f64], nontargets: &[f64], dcf: &DcfParams) -> Result<DetMetrics> {
    dcf.validate()?;
    let points = operating_points(targets, nontargets)?;
    Ok(DetMetrics {
        eer: eer_from_points(&points),
        min_dcf: min_dcf_from_points(&points, dcf),
        points,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Quadratic sweep: thresholds from each score's next larger neighbour,
    /// and every threshold recounts every score.
    pub(crate) fn brute_force_points(targets: &[f64], nontargets: &[f64]) -> Vec<OperatingPoint> {
        let all: Vec<f64> = targets.iter().chain(nontargets).copied().collect();
        let mut th = vec![f64::NEG_INFINITY, f64::INFINITY];
        for &s in &all {
            let next = all.iter().copied().filter(|&v| v > s).fold(f64::INFINITY, f64::min);
            if next.is_finite() && !th.contains(&(s + (next - s) / 2.0)) {
                th.push(s + (next - s) / 2.0);
            }
        }
        th.sort_by(f64::total_cmp);
        th.into_iter()
            .map(|th| OperatingPoint {
                threshold: th,
                p_miss: targets.iter().filter(|&&s| s <= th).count() as f64 / targets.len() as f64,
                p_fa: nontargets.iter().filter(|&&s| s > th).count() as f64 / nontargets.len() as f64,
            })
            .collect()
    }

    pub(crate) fn random_scores(seed: u64, n: usize, shift: f64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = (0..n / 2).map(|_| rng.gen_range(-1.0..1.0) + shift).collect();
        let m = (0..n - n / 2).map(|_| (rng.gen_range(-1.0..1.0) * 10.0f64).round() / 10.0).collect();
        (t, m)
    }

    #[test]
    fn worked_example() {
        let eer = compute_eer(&[0.9, 0.8, 0.4], &[0.5, 0.3, 0.2]).unwrap();
        assert!((eer - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn separation_extremes() {
        assert_eq!(compute_eer(&[2.0, 3.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!(compute_eer(&[0.0, 1.0], &[2.0, 3.0]).unwrap() >= 0.99);
        let d = DcfParams::default();
        assert_eq!(compute_min_dcf(&[2.0, 3.0], &[0.0, 1.0], &d).unwrap(), 0.0);
        assert!(compute_eer(&[], &[1.0]).is_err());
        assert!(compute_min_dcf(&[1.0], &[], &d).is_err());
    }

    #[test]
    fn certain_target_prior_costs_nothing() {
        let (t, n) = random_scores(4, 50, 0.0);
        let d = DcfParams {
            p_target: 1.0,
            ..DcfParams::default()
        };
        assert_eq!(compute_min_dcf(&t, &n, &d).unwrap(), 0.0);
        assert!(compute_min_dcf(&t, &n, &DcfParams { p_target: 0.0, ..d }).is_err());
        assert!(compute_min_dcf(&t, &n, &DcfParams { c_fa: 0.0, ..d }).is_err());
    }

    #[test]
    fn interpolates_between_points() {
        // A tied score moves both rates at once, from (0, 1/2) to (1/2, 0).
        let eer = compute_eer(&[1.0, 3.0], &[1.0, 0.0]).unwrap();
        assert!((eer - 0.25).abs() < 1e-15, "{eer}");
    }

    #[test]
    fn two_hundred_scores_have_201_thresholds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t: Vec<f64> = (0..100).map(|_| rng.gen_range(0.0..1.0)).collect();
        let n: Vec<f64> = (0..100).map(|_| rng.gen_range(-0.5..0.5)).collect();
        assert_eq!(candidate_thresholds(&t, &n).len(), 201);
        let d = DcfParams::default();
        let bf = brute_force_points(&t, &n);
        let oracle = bf.iter().map(|p| d.cost(p.p_miss, p.p_fa)).fold(f64::INFINITY, f64::min);
        assert_eq!(compute_min_dcf(&t, &n, &d).unwrap(), oracle);
    }

    proptest! {
        #[test]
        fn sweep_matches_brute_force(seed in 0u64..1000, n in 2usize..300, shift in -1.0f64..2.0) {
            let (t, m) = random_scores(seed, n, shift);
            let bf = brute_force_points(&t, &m);
            let fast = operating_points(&t, &m).unwrap();
            prop_assert_eq!(&fast, &bf);
            prop_assert_eq!(compute_eer(&t, &m).unwrap(), eer_from_points(&bf));
            for w in fast.windows(2) {
                prop_assert!(w[1].p_miss >= w[0].p_miss && w[1].p_fa <= w[0].p_fa);
            }
        }

        #[test]
        fn eer_invariant_under_monotone_maps(seed in 0u64..1000, n in 2usize..200) {
            let (t, m) = random_scores(seed, n, 0.3);
            let f = |v: &f64| (3.0 * v).exp() + 1.0;
            let (tt, mm): (Vec<f64>, Vec<f64>) = (t.iter().map(f).collect(), m.iter().map(f).collect());
            prop_assert!((compute_eer(&t, &m).unwrap() - compute_eer(&tt, &mm).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn min_dcf_bounded_by_trivial_systems(seed in 0u64..1000, n in 2usize..200, pt in 0.001f64..0.999) {
            let (t, m) = random_scores(seed, n, 0.0);
            let d = DcfParams { p_target: pt, ..DcfParams::default() };
            let v = compute_min_dcf(&t, &m, &d).unwrap();
            prop_assert!(v <= (d.c_miss * pt).min(d.c_fa * (1.0 - pt)) + 1e-15);
            prop_assert!(v >= 0.0);
        }
    }
}
