//! Budget-constrained incentive assignment: pick one level per user to
//! maximize `sum_i k_i f_ij` subject to `sum_i k_i t_j(i) / sum_i k_i <= B`.
//!
//! The dual rule gives each user `argmax_j f_ij - lambda t_j`; bisection finds
//! the dual price. A brute-force enumerator serves as the oracle.

use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::synth::{fmt_float, TreatmentList};

/// Relative slack allowed when comparing spend against the budget.
const BUDGET_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct AllocationProblem {
    /// `users x |T|` probabilities, row-major.
    scores: Vec<f64>,
    users: usize,
    treatments: TreatmentList,
    weights: Vec<f64>,
    budget: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AllocationResult {
    /// Level index per user.
    pub assignment: Vec<usize>,
    /// Dual price of the returned assignment; `None` for the enumerator.
    pub lambda: Option<f64>,
    pub total_mpp: f64,
    pub per_capita_spend: f64,
}

impl AllocationProblem {
    pub fn new(
        scores: Vec<f64>,
        treatments: TreatmentList,
        weights: Option<Vec<f64>>,
        budget: f64,
    ) -> Result<Self> {
        let k = treatments.len();
        if scores.is_empty() || !scores.len().is_multiple_of(k) {
            return Err(Error::invalid(format!(
                "score matrix has {} entries, not a positive multiple of |T| = {k}",
                scores.len()
            )));
        }
        if let Some(bad) = scores.iter().find(|f| !(0.0..=1.0).contains(*f)) {
            return Err(Error::invalid(format!("score {bad} outside [0, 1]")));
        }
        let users = scores.len() / k;
        let weights = weights.unwrap_or_else(|| vec![1.0; users]);
        if weights.len() != users {
            return Err(Error::invalid(format!(
                "{} weights for {users} users",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::invalid(
                "user weights must be finite and nonnegative",
            ));
        }
        if !(weights.iter().sum::<f64>() > 0.0) {
            return Err(Error::invalid("user weights sum to zero"));
        }
        if !budget.is_finite() {
            return Err(Error::invalid("budget must be finite"));
        }
        Ok(Self {
            scores,
            users,
            treatments,
            weights,
            budget,
        })
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn treatments(&self) -> &TreatmentList {
        &self.treatments
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let k = self.treatments.len();
        &self.scores[i * k..(i + 1) * k]
    }

    /// `(total_mpp, per_capita_spend)` of an assignment.
    pub fn value(&self, assignment: &[usize]) -> (f64, f64) {
        let t = self.treatments.values();
        let mut total = 0.0;
        let mut spend = 0.0;
        for (i, &j) in assignment.iter().enumerate() {
            total += self.weights[i] * self.row(i)[j];
            spend += self.weights[i] * t[j];
        }
        let mass: f64 = self.weights.iter().sum();
        (total, spend / mass)
    }

    pub fn is_feasible(&self, per_capita_spend: f64) -> bool {
        per_capita_spend <= self.budget + BUDGET_EPS * self.budget.abs().max(1.0)
    }

    fn result(&self, assignment: Vec<usize>, lambda: Option<f64>) -> AllocationResult {
        let (total_mpp, per_capita_spend) = self.value(&assignment);
        AllocationResult {
            assignment,
            lambda,
            total_mpp,
            per_capita_spend,
        }
    }

    /// Spends budget left over by the dual rounding: repeatedly applies the
    /// single-user change with the largest value gain that stays feasible.
    fn fill(&self, mut best: AllocationResult) -> AllocationResult {
        let t = self.treatments.values();
        let mass: f64 = self.weights.iter().sum();
        let mut spend = best.per_capita_spend * mass;
        loop {
            let mut pick: Option<(f64, usize, usize)> = None;
            for i in 0..self.users {
                let cur = best.assignment[i];
                let row = self.row(i);
                for j in 0..t.len() {
                    let gain = self.weights[i] * (row[j] - row[cur]);
                    let new_spend = spend + self.weights[i] * (t[j] - t[cur]);
                    if gain > 0.0
                        && self.is_feasible(new_spend / mass)
                        && pick.is_none_or(|(g, _, _)| gain > g)
                    {
                        pick = Some((gain, i, j));
                    }
                }
            }
            match pick {
                Some((_, i, j)) => {
                    spend += self.weights[i] * (t[j] - t[best.assignment[i]]);
                    best.assignment[i] = j;
                }
                None => break,
            }
        }
        let lambda = best.lambda;
        self.result(best.assignment, lambda)
    }

    fn check_budget(&self) -> Result<()> {
        if self.budget < self.treatments.min() {
            return Err(Error::Infeasible(format!(
                "budget {} is below the cheapest incentive {}",
                self.budget,
                self.treatments.min()
            )));
        }
        Ok(())
    }

    /// Upper bracket for the dual price: at this value every user strictly
    /// prefers the cheapest level (ties already go there).
    fn lambda_hi(&self) -> f64 {
        let t = self.treatments.values();
        let min_gap = t
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        let range = (0..self.users)
            .map(|i| {
                let r = self.row(i);
                r.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                    - r.iter().copied().fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max);
        if range > 0.0 {
            2.0 * range / min_gap
        } else {
            1.0 / min_gap
        }
    }
}

/// Per-user `argmax_j f_ij - lambda t_j`, ties toward the cheapest level.
pub fn assign_at_lambda(problem: &AllocationProblem, lambda: f64) -> Result<Vec<usize>> {
    if !(lambda >= 0.0) {
        return Err(Error::invalid(format!(
            "dual price must be nonnegative, got {lambda}"
        )));
    }
    let t = problem.treatments.values();
    let pick = |i: usize| {
        let row = problem.row(i);
        let mut best = 0;
        let mut best_v = row[0] - lambda * t[0];
        for j in 1..row.len() {
            let v = row[j] - lambda * t[j];
            if v > best_v {
                best = j;
                best_v = v;
            }
        }
        best
    };
    Ok(if problem.users >= 4096 {
        (0..problem.users).into_par_iter().map(pick).collect()
    } else {
        (0..problem.users).map(pick).collect()
    })
}

/// Bisection on the dual price. The tolerance is relative to the initial
/// bracket so the visited prices scale with the incentive unit.
pub fn allocate_dual(
    problem: &AllocationProblem,
    tol: f64,
    max_iter: usize,
) -> Result<AllocationResult> {
    problem.check_budget()?;
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let at_zero = problem.result(assign_at_lambda(problem, 0.0)?, Some(0.0));
    if problem.is_feasible(at_zero.per_capita_spend) {
        return Ok(at_zero);
    }
    let mut lo = 0.0;
    let mut hi = problem.lambda_hi();
    let width = hi;
    let mut best = problem.result(assign_at_lambda(problem, hi)?, Some(hi));
    debug_assert!(problem.is_feasible(best.per_capita_spend));
    for _ in 0..max_iter {
        if hi - lo <= tol * width {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let cand = problem.result(assign_at_lambda(problem, mid)?, Some(mid));
        if problem.is_feasible(cand.per_capita_spend) {
            if cand.total_mpp > best.total_mpp {
                best = cand;
            }
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(problem.fill(best))
}

/// Largest instance the enumerator accepts.
pub const BRUTEFORCE_MAX_USERS: usize = 12;
pub const BRUTEFORCE_MAX_ASSIGNMENTS: u64 = 1 << 24;

/// Exact optimum by enumerating all `|T|^M` assignments. Ties keep the
/// lexicographically first assignment.
pub fn allocate_bruteforce(problem: &AllocationProblem) -> Result<AllocationResult> {
    problem.check_budget()?;
    let m = problem.users;
    let k = problem.treatments.len();
    let count = (k as u64).checked_pow(m as u32);
    if m > BRUTEFORCE_MAX_USERS || count.is_none_or(|c| c > BRUTEFORCE_MAX_ASSIGNMENTS) {
        return Err(Error::TooLarge(format!(
            "{m} users x {k} levels exceeds the enumeration bound"
        )));
    }
    let t = problem.treatments.values();
    let mass: f64 = problem.weights.iter().sum();
    let mut cur = vec![0usize; m];
    let mut best: Option<(f64, Vec<usize>)> = None;
    loop {
        let mut total = 0.0;
        let mut spend = 0.0;
        for (i, &j) in cur.iter().enumerate() {
            total += problem.weights[i] * problem.row(i)[j];
            spend += problem.weights[i] * t[j];
        }
        if problem.is_feasible(spend / mass) && best.as_ref().is_none_or(|(v, _)| total > *v) {
            best = Some((total, cur.clone()));
        }
        // odometer increment, last user fastest
        let mut pos = m;
        loop {
            if pos == 0 {
                let (_, a) = best.expect("all-cheapest assignment is feasible");
                return Ok(problem.result(a, None));
            }
            pos -= 1;
            cur[pos] += 1;
            if cur[pos] < k {
                break;
            }
            cur[pos] = 0;
        }
    }
}

/// Reads `user_id,f_1..f_K[,weight]` preceded by a `# treatments: t1,t2,...`
/// line. Returns the user ids and the problem at the given budget.
pub fn read_scores_csv<R: BufRead>(
    mut input: R,
    budget: f64,
) -> Result<(Vec<u64>, AllocationProblem)> {
    let mut first = String::new();
    input.read_line(&mut first)?;
    let list = first.trim().strip_prefix("# treatments:").ok_or_else(|| {
        Error::Data("scores file must start with `# treatments: t1,t2,...`".into())
    })?;
    let values = list
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::Data(format!("bad treatment list: {e}")))?;
    let treatments = TreatmentList::new(values)?;
    let k = treatments.len();

    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(input);
    let header = rdr.headers()?.clone();
    let has_weight = match header.len() {
        n if n == k + 1 => false,
        n if n == k + 2 && &header[k + 1] == "weight" => true,
        n => {
            return Err(Error::Data(format!(
                "expected user_id plus {k} score columns (and optionally `weight`), got {n} columns"
            )))
        }
    };
    let mut ids = Vec::new();
    let mut scores = Vec::new();
    let mut weights = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |c: usize| -> Result<f64> {
            rec[c]
                .trim()
                .parse()
                .map_err(|e| Error::Data(format!("row {}: column {c}: {e}", line + 1)))
        };
        ids.push(
            rec[0]
                .trim()
                .parse()
                .map_err(|e| Error::Data(format!("row {}: user id: {e}", line + 1)))?,
        );
        for c in 1..=k {
            scores.push(num(c)?);
        }
        if has_weight {
            weights.push(num(k + 1)?);
        }
    }
    let problem =
        AllocationProblem::new(scores, treatments, has_weight.then_some(weights), budget)?;
    Ok((ids, problem))
}

pub fn write_scores_csv<W: Write>(out: W, ids: &[u64], problem: &AllocationProblem) -> Result<()> {
    let mut out = out;
    let t: Vec<String> = problem
        .treatments
        .values()
        .iter()
        .map(|&v| fmt_float(v))
        .collect();
    writeln!(out, "# treatments: {}", t.join(","))?;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["user_id".to_string()];
    header.extend((1..=problem.treatments.len()).map(|j| format!("f_{j}")));
    w.write_record(&header)?;
    for (i, id) in ids.iter().enumerate() {
        let mut row = vec![id.to_string()];
        row.extend(problem.row(i).iter().map(|&f| fmt_float(f)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `user_id,assigned_t,score` rows, then a `# lambda=...` summary line.
pub fn write_allocation_csv<W: Write>(
    out: W,
    ids: &[u64],
    problem: &AllocationProblem,
    result: &AllocationResult,
) -> Result<()> {
    let t = problem.treatments.values();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["user_id", "assigned_t", "score"])?;
    for (i, (&id, &j)) in ids.iter().zip(&result.assignment).enumerate() {
        w.write_record([
            id.to_string(),
            fmt_float(t[j]),
            fmt_float(problem.row(i)[j]),
        ])?;
    }
    let mut out = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    writeln!(out, "{}", summary_line(result))?;
    Ok(())
}

pub fn summary_line(result: &AllocationResult) -> String {
    format!(
        "# lambda={},total_mpp={},per_capita_spend={}",
        result
            .lambda
            .map(fmt_float)
            .unwrap_or_else(|| "none".into()),
        fmt_float(result.total_mpp),
        fmt_float(result.per_capita_spend)
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_by_two(budget: f64) -> AllocationProblem {
        AllocationProblem::new(
            vec![0.1, 0.3, 0.2, 0.25],
            TreatmentList::new(vec![1.0, 2.0]).unwrap(),
            None,
            budget,
        )
        .unwrap()
    }

    #[test]
    fn assign_reference_cases() {
        let p = two_by_two(1.5);
        assert_eq!(assign_at_lambda(&p, 0.0).unwrap(), vec![1, 1]);
        assert_eq!(assign_at_lambda(&p, 1e6).unwrap(), vec![0, 0]);
        assert_eq!(assign_at_lambda(&p, 0.06).unwrap(), vec![1, 0]);
        assert!(assign_at_lambda(&p, -1.0).is_err());
        // exact tie goes to the cheaper level
        let flat = AllocationProblem::new(
            vec![0.4, 0.4],
            TreatmentList::new(vec![1.0, 2.0]).unwrap(),
            None,
            2.0,
        )
        .unwrap();
        assert_eq!(assign_at_lambda(&flat, 0.0).unwrap(), vec![0]);
    }

    #[test]
    fn dual_reference_instance() {
        let p = two_by_two(1.5);
        let r = allocate_dual(&p, 1e-6, 200).unwrap();
        assert_eq!(r.assignment, vec![1, 0]);
        assert!((r.total_mpp - 0.5).abs() < 1e-12);
        assert!((r.per_capita_spend - 1.5).abs() < 1e-12);
        let b = allocate_bruteforce(&p).unwrap();
        assert!((b.total_mpp - 0.5).abs() < 1e-12);
    }

    #[test]
    fn budget_extremes() {
        let big = allocate_dual(&two_by_two(2.0), 1e-6, 200).unwrap();
        assert_eq!(big.lambda, Some(0.0));
        assert_eq!(big.assignment, vec![1, 1]);
        let tight = allocate_dual(&two_by_two(1.0), 1e-6, 200).unwrap();
        assert_eq!(tight.assignment, vec![0, 0]);
        assert!(matches!(
            allocate_dual(&two_by_two(0.5), 1e-6, 200),
            Err(Error::Infeasible(_))
        ));
        assert!(matches!(
            allocate_bruteforce(&two_by_two(0.5)),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn bruteforce_degenerate_cases() {
        let one = AllocationProblem::new(
            vec![0.2, 0.7, 0.5],
            TreatmentList::new(vec![1.0, 2.0, 3.0]).unwrap(),
            None,
            1e9,
        )
        .unwrap();
        assert_eq!(allocate_bruteforce(&one).unwrap().total_mpp, 0.7);
        let flat = AllocationProblem::new(
            vec![0.3; 6],
            TreatmentList::new(vec![1.0, 2.0]).unwrap(),
            Some(vec![1.0, 2.0, 0.5]),
            1.5,
        )
        .unwrap();
        assert!((allocate_bruteforce(&flat).unwrap().total_mpp - 0.3 * 3.5).abs() < 1e-12);
        let huge = AllocationProblem::new(
            vec![0.5; 26],
            TreatmentList::new(vec![1.0, 2.0]).unwrap(),
            None,
            1.5,
        )
        .unwrap();
        assert!(matches!(
            allocate_bruteforce(&huge),
            Err(Error::TooLarge(_))
        ));
    }

    #[test]
    fn invalid_problems_are_rejected() {
        let tl = TreatmentList::new(vec![1.0, 2.0]).unwrap();
        assert!(AllocationProblem::new(vec![0.1, 0.2, 0.3], tl.clone(), None, 1.0).is_err());
        assert!(AllocationProblem::new(vec![0.1, 1.2], tl.clone(), None, 1.0).is_err());
        assert!(AllocationProblem::new(vec![0.1, 0.2], tl.clone(), Some(vec![0.0]), 1.0).is_err());
        assert!(AllocationProblem::new(vec![0.1, 0.2], tl, Some(vec![-1.0]), 1.0).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let p = two_by_two(1.5);
        let mut buf = Vec::new();
        write_scores_csv(&mut buf, &[7, 9], &p).unwrap();
        let (ids, back) = read_scores_csv(&buf[..], 1.5).unwrap();
        assert_eq!(ids, vec![7, 9]);
        assert_eq!(back, p);
        let r = allocate_dual(&back, 1e-6, 200).unwrap();
        let mut out = Vec::new();
        write_allocation_csv(&mut out, &ids, &back, &r).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "user_id,assigned_t,score");
        assert_eq!(lines.len(), 4);
        assert!(lines[3].starts_with("# lambda="));
        assert!(read_scores_csv(&b"user_id,f_1\n1,0.5\n"[..], 1.0).is_err());
    }
}
