//! Evaluation: AUC, price calibration error, response curves and the
//! relative-improvement report.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::synth::{CampaignOracle, Sample, TreatmentList, UserProfile};

/// Anything that maps a user and a raw incentive amount to a payment probability.
pub trait Predictor {
    fn predict(&self, user: &UserProfile, t: f64) -> Result<f64>;
}

impl Predictor for CampaignOracle {
    fn predict(&self, user: &UserProfile, t: f64) -> Result<f64> {
        crate::synth::true_mpp(self, user, t)
    }
}

impl<F> Predictor for F
where
    F: Fn(&UserProfile, f64) -> f64,
{
    fn predict(&self, user: &UserProfile, t: f64) -> Result<f64> {
        Ok(self(user, t))
    }
}

/// 1-based ranks with ties sharing their average rank.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Mann-Whitney AUC: the fraction of (positive, negative) pairs ordered
/// correctly, ties counting one half. `O(n log n)` via midranks.
pub fn auc(labels: &[u8], scores: &[f64]) -> Result<f64> {
    if labels.len() != scores.len() {
        return Err(Error::invalid("labels and scores differ in length"));
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedAuc(format!(
            "need both classes, got {n_pos} positives and {n_neg} negatives"
        )));
    }
    let ranks = midranks(scores);
    let rank_sum: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, &y)| y == 1)
        .map(|(r, _)| r)
        .sum();
    let np = n_pos as f64;
    let u = rank_sum - np * (np + 1.0) / 2.0;
    Ok(u / (np * n_neg as f64))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PceResult {
    pub value: f64,
    /// Levels that contributed; empty levels are dropped.
    pub levels_used: usize,
}

/// Price calibration error: mean over treatment levels of
/// `|mean label - mean prediction|`.
pub fn pce(
    treatments: &TreatmentList,
    t: &[f64],
    labels: &[u8],
    predictions: &[f64],
) -> Result<PceResult> {
    if t.len() != labels.len() || t.len() != predictions.len() {
        return Err(Error::invalid("pce inputs differ in length"));
    }
    let k = treatments.len();
    let mut label_sum = vec![0.0; k];
    let mut pred_sum = vec![0.0; k];
    let mut count = vec![0usize; k];
    for ((&ti, &y), &p) in t.iter().zip(labels).zip(predictions) {
        let j = treatments.nearest_index(ti);
        label_sum[j] += f64::from(y);
        pred_sum[j] += p;
        count[j] += 1;
    }
    let mut total = 0.0;
    let mut used = 0;
    for j in 0..k {
        if count[j] == 0 {
            log::warn!(
                "pce: no samples at t = {}, level excluded",
                treatments.values()[j]
            );
            continue;
        }
        let n = count[j] as f64;
        total += (label_sum[j] / n - pred_sum[j] / n).abs();
        used += 1;
    }
    if used == 0 {
        return Err(Error::invalid(
            "pce needs at least one populated treatment level",
        ));
    }
    Ok(PceResult {
        value: total / used as f64,
        levels_used: used,
    })
}

/// Mean prediction over `users` at every treatment level.
pub fn response_curve<P: Predictor + ?Sized>(
    model: &P,
    users: &[UserProfile],
    treatments: &TreatmentList,
) -> Result<Vec<(f64, f64)>> {
    if users.is_empty() {
        return Err(Error::invalid("response curve needs at least one user"));
    }
    treatments
        .values()
        .iter()
        .map(|&t| {
            let mut s = 0.0;
            for u in users {
                s += model.predict(u, t)?;
            }
            Ok((t, s / users.len() as f64))
        })
        .collect()
}

/// Signed percentage improvement over `baseline`; positive means better for
/// both orientations.
pub fn relative_improvement(value: f64, baseline: f64, higher_is_better: bool) -> Result<f64> {
    if baseline == 0.0 || !baseline.is_finite() {
        return Err(Error::invalid(
            "relative improvement undefined for a zero baseline",
        ));
    }
    let diff = if higher_is_better {
        value - baseline
    } else {
        baseline - value
    };
    Ok(diff / baseline * 100.0)
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    if n < 2 {
        return 0.0;
    }
    let ma = a[..n].iter().sum::<f64>() / n as f64;
    let mb = b[..n].iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a[..n].iter().zip(&b[..n]) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}

/// Spearman rank correlation (Pearson on midranks). Zero for constant input.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    pearson(&midranks(a), &midranks(b))
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurveRow {
    pub t: f64,
    pub mean_label: f64,
    pub mean_prediction: f64,
    pub count: usize,
}

/// Metrics for one method on one test set.
#[derive(Clone, Debug, PartialEq)]
pub struct MethodEval {
    pub method: String,
    pub auc: f64,
    pub pce: f64,
    /// Per-level calibration on the logged test samples.
    pub calibration: Vec<CurveRow>,
    /// Mean prediction over all test users at each level.
    pub response: Vec<(f64, f64)>,
}

impl MethodEval {
    pub fn response_slope_sign(&self) -> f64 {
        let t: Vec<f64> = self.response.iter().map(|r| r.0).collect();
        let m: Vec<f64> = self.response.iter().map(|r| r.1).collect();
        spearman(&t, &m)
    }
}

/// Scores `test` at the logged incentives and evaluates AUC, PCE and curves.
pub fn evaluate<P: Predictor + ?Sized>(
    method: &str,
    model: &P,
    test: &[Sample],
    treatments: &TreatmentList,
) -> Result<MethodEval> {
    let preds = test
        .iter()
        .map(|s| model.predict(&s.user, s.t))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<u8> = test.iter().map(|s| s.y).collect();
    let t: Vec<f64> = test.iter().map(|s| s.t).collect();
    let auc = auc(&labels, &preds)?;
    let pce = pce(treatments, &t, &labels, &preds)?.value;
    let k = treatments.len();
    let mut rows: Vec<CurveRow> = treatments
        .values()
        .iter()
        .map(|&t| CurveRow {
            t,
            mean_label: 0.0,
            mean_prediction: 0.0,
            count: 0,
        })
        .collect();
    for ((ti, y), p) in t.iter().zip(&labels).zip(&preds) {
        let r = &mut rows[treatments.nearest_index(*ti)];
        r.mean_label += f64::from(*y);
        r.mean_prediction += p;
        r.count += 1;
    }
    for r in rows.iter_mut().take(k) {
        if r.count > 0 {
            r.mean_label /= r.count as f64;
            r.mean_prediction /= r.count as f64;
        }
    }
    let users: Vec<UserProfile> = test.iter().map(|s| s.user.clone()).collect();
    let response = response_curve(model, &users, treatments)?;
    Ok(MethodEval {
        method: method.to_string(),
        auc,
        pce,
        calibration: rows,
        response,
    })
}

/// Methods side by side, with improvements relative to a named baseline.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub baseline: String,
    pub methods: Vec<MethodEval>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Improvement {
    pub method: String,
    pub auc: f64,
    pub pce: f64,
}

impl EvalReport {
    pub fn new(baseline: &str, methods: Vec<MethodEval>) -> Result<Self> {
        if !methods.iter().any(|m| m.method == baseline) {
            return Err(Error::invalid(format!(
                "baseline `{baseline}` not among evaluated methods"
            )));
        }
        Ok(Self {
            baseline: baseline.to_string(),
            methods,
        })
    }

    pub fn get(&self, method: &str) -> Option<&MethodEval> {
        self.methods.iter().find(|m| m.method == method)
    }

    pub fn improvements(&self) -> Result<Vec<Improvement>> {
        let base = self.get(&self.baseline).expect("baseline checked in new");
        self.methods
            .iter()
            .map(|m| {
                Ok(Improvement {
                    method: m.method.clone(),
                    auc: relative_improvement(m.auc, base.auc, true)?,
                    pce: relative_improvement(m.pce, base.pce, false)?,
                })
            })
            .collect()
    }

    /// `method,auc,pce,auc_improvement_pct,pce_improvement_pct`
    pub fn metrics_csv(&self) -> Result<String> {
        let mut s = String::from("method,auc,pce,auc_improvement_pct,pce_improvement_pct\n");
        for (m, imp) in self.methods.iter().zip(self.improvements()?) {
            writeln!(
                s,
                "{},{},{},{},{}",
                m.method,
                fmt(m.auc),
                fmt(m.pce),
                fmt(imp.auc),
                fmt(imp.pce)
            )
            .unwrap();
        }
        Ok(s)
    }

    /// `method,t,mean_label,mean_prediction,n`
    pub fn calibration_csv(&self) -> String {
        let mut s = String::from("method,t,mean_label,mean_prediction,n\n");
        for m in &self.methods {
            for r in &m.calibration {
                writeln!(
                    s,
                    "{},{},{},{},{}",
                    m.method,
                    fmt(r.t),
                    fmt(r.mean_label),
                    fmt(r.mean_prediction),
                    r.count
                )
                .unwrap();
            }
        }
        s
    }

    /// `method,t,mean_prediction` over every test user at every level.
    pub fn response_csv(&self) -> String {
        let mut s = String::from("method,t,mean_prediction\n");
        for m in &self.methods {
            for (t, p) in &m.response {
                writeln!(s, "{},{},{}", m.method, fmt(*t), fmt(*p)).unwrap();
            }
        }
        s
    }

    /// Methods across, metrics down, improvements in percent over the baseline.
    pub fn text_table(&self) -> Result<String> {
        let imps = self.improvements()?;
        let width = self
            .methods
            .iter()
            .map(|m| m.method.len())
            .max()
            .unwrap_or(0)
            .max(9);
        let mut s = String::new();
        writeln!(s, "Relative improvement over {} (%)", self.baseline).unwrap();
        write!(s, "{:<6}", "").unwrap();
        for m in &self.methods {
            write!(s, " {:>width$}", m.method).unwrap();
        }
        s.push('\n');
        for (name, pick) in [("AUC", 0usize), ("PCE", 1)] {
            write!(s, "{name:<6}").unwrap();
            for imp in &imps {
                let v = if pick == 0 { imp.auc } else { imp.pce };
                let cell = if imp.method == self.baseline {
                    "-".to_string()
                } else {
                    format!("{v:+.2}%")
                };
                write!(s, " {cell:>width$}").unwrap();
            }
            s.push('\n');
        }
        writeln!(s).unwrap();
        write!(s, "{:<6}", "raw").unwrap();
        for m in &self.methods {
            write!(s, " {:>width$}", format!("{:.4}/{:.4}", m.auc, m.pce)).unwrap();
        }
        s.push('\n');
        Ok(s)
    }
}

fn fmt(v: f64) -> String {
    crate::synth::fmt_float(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gen_users, OracleParams};

    #[test]
    fn auc_reference_values() {
        assert_eq!(auc(&[1, 0], &[0.9, 0.1]).unwrap(), 1.0);
        assert_eq!(auc(&[1, 0, 1, 0], &[0.3; 4]).unwrap(), 0.5);
        assert_eq!(auc(&[1, 1, 0, 0], &[0.8, 0.3, 0.5, 0.1]).unwrap(), 0.75);
        assert!(matches!(
            auc(&[1, 1], &[0.2, 0.3]),
            Err(Error::UndefinedAuc(_))
        ));
    }

    #[test]
    fn pce_reference_values() {
        let tl = TreatmentList::new(vec![1.0, 2.0]).unwrap();
        // predictions equal to per-level label means
        let r = pce(
            &tl,
            &[1.0, 1.0, 2.0, 2.0],
            &[1, 0, 1, 1],
            &[0.5, 0.5, 1.0, 1.0],
        )
        .unwrap();
        assert_eq!(r.value, 0.0);
        // one level: labels mean 0.6, predictions mean 0.4
        let one = TreatmentList::new(vec![1.0, 2.0]).unwrap();
        let r = pce(&one, &[1.0; 5], &[1, 1, 1, 0, 0], &[0.4; 5]).unwrap();
        assert!((r.value - 0.2).abs() < 1e-12);
        assert_eq!(r.levels_used, 1);
        // two levels with gaps 0.1 and 0.3
        let r = pce(
            &tl,
            &[1.0, 1.0, 2.0, 2.0],
            &[1, 0, 1, 0],
            &[0.6, 0.6, 0.2, 0.2],
        )
        .unwrap();
        assert!((r.value - 0.2).abs() < 1e-12);
    }

    #[test]
    fn relative_improvement_conventions() {
        assert!((relative_improvement(0.66, 0.60, true).unwrap() - 10.0).abs() < 1e-9);
        assert!((relative_improvement(0.08, 0.10, false).unwrap() - 20.0).abs() < 1e-9);
        assert_eq!(relative_improvement(0.3, 0.3, true).unwrap(), 0.0);
        assert!(relative_improvement(0.3, 0.0, true).is_err());
    }

    #[test]
    fn response_curves() {
        let tl = TreatmentList::linear(5, 1.0, 5.0).unwrap();
        let users = gen_users(50, 8, 2).unwrap();
        let flat = |_: &UserProfile, _: f64| 0.5;
        let c = response_curve(&flat, &users, &tl).unwrap();
        assert!(c.iter().all(|p| p.1 == 0.5));
        let oracle = CampaignOracle::random(8, &OracleParams::default(), 1).unwrap();
        let c = response_curve(&oracle, &users, &tl).unwrap();
        assert!(c.windows(2).all(|w| w[1].1 > w[0].1));
    }

    #[test]
    fn spearman_basics() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 1.0, 0.0]) + 1.0).abs() < 1e-12);
        assert_eq!(spearman(&[1.0, 2.0], &[5.0, 5.0]), 0.0);
        assert_eq!(midranks(&[3.0, 1.0, 3.0]), vec![2.5, 1.0, 2.5]);
    }

    #[test]
    fn report_baseline_against_itself_is_zero() {
        let m = MethodEval {
            method: "sbbm_u".into(),
            auc: 0.7,
            pce: 0.05,
            calibration: vec![],
            response: vec![],
        };
        let r = EvalReport::new("sbbm_u", vec![m]).unwrap();
        let imp = r.improvements().unwrap();
        assert_eq!((imp[0].auc, imp[0].pce), (0.0, 0.0));
        assert!(r.text_table().unwrap().contains("sbbm_u"));
        assert!(EvalReport::new("pcan", vec![]).is_err());
    }
}
