//! Derivative-free constrained local optimizer in the COBYLA family:
//! linear models of objective and constraints interpolated over an n+1-point
//! simplex, an infinity-norm trust region, and an L1 exact-penalty merit
//! function with an adaptive penalty weight. The trust-region subproblem is
//! a small linear program solved exactly by a dense two-phase simplex method.
//!
//! Inequality constraints are feasible when `c_j(x) >= 0`.

use crate::linalg::{dot, norm_inf, Mat};
use crate::scalar::{all_finite, Scalar};

/// Worst-case objective value substituted for non-finite evaluations after
/// the initial point.
const WORST_CASE: f64 = 1e30;

/// Max-violation level at or below which a point counts as feasible.
const FEAS_TOL: f64 = 1e-8;

pub struct OptProblem<'a, T> {
    pub dim: usize,
    pub objective: Box<dyn Fn(&[T]) -> T + 'a>,
    /// Feasible when every entry is `>= 0` at the point.
    pub constraints: Vec<Box<dyn Fn(&[T]) -> T + 'a>>,
    pub initial: Vec<T>,
    /// Initial trust-region radius.
    pub rho_start: T,
    /// Final trust-region radius; convergence is declared at this scale.
    pub rho_end: T,
    /// Hard budget of objective evaluations.
    pub max_evals: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    RadiusConverged,
    EvalBudget,
    Stall,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::RadiusConverged => "radius-converged",
            Termination::EvalBudget => "eval-budget",
            Termination::Stall => "stall",
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptResult<T> {
    pub best: Vec<T>,
    pub best_objective: T,
    /// Max constraint violation, recomputed at `best` on return.
    pub max_violation: T,
    pub evals: usize,
    pub constraint_evals: usize,
    pub termination: Termination,
}

#[derive(Debug, thiserror::Error)]
pub enum OptError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("objective non-finite at the initial point")]
    NonFiniteInitial,
}

#[derive(Clone)]
struct Eval<T> {
    x: Vec<T>,
    f: T,
    c: Vec<T>,
    /// Sum of violations, used by the merit function.
    viol_sum: T,
    /// Max violation, used for feasibility classification.
    viol_max: T,
}

struct Evaluator<'p, 'a, T: Scalar> {
    problem: &'p OptProblem<'a, T>,
    evals: usize,
    constraint_evals: usize,
    best_feasible: Option<Eval<T>>,
    best_infeasible: Option<Eval<T>>,
}

impl<'p, 'a, T: Scalar> Evaluator<'p, 'a, T> {
    fn new(problem: &'p OptProblem<'a, T>) -> Self {
        Evaluator {
            problem,
            evals: 0,
            constraint_evals: 0,
            best_feasible: None,
            best_infeasible: None,
        }
    }

    fn budget_left(&self) -> bool {
        self.evals < self.problem.max_evals
    }

    /// Evaluate objective and all constraints; `None` when the budget is
    /// exhausted. Non-finite objectives become a worst-case value.
    fn eval(&mut self, x: &[T]) -> Option<Eval<T>> {
        if !self.budget_left() {
            return None;
        }
        self.evals += 1;
        let mut f = (self.problem.objective)(x);
        if !f.is_finite() {
            f = T::c(WORST_CASE);
        }
        let c: Vec<T> = self
            .problem
            .constraints
            .iter()
            .map(|con| {
                self.constraint_evals += 1;
                let v = con(x);
                if v.is_finite() {
                    v
                } else {
                    T::c(-WORST_CASE)
                }
            })
            .collect();
        let mut viol_sum = T::zero();
        let mut viol_max = T::zero();
        for &cj in &c {
            let v = (-cj).max(T::zero());
            viol_sum = viol_sum + v;
            viol_max = viol_max.max(v);
        }
        let e = Eval { x: x.to_vec(), f, c, viol_sum, viol_max };
        self.record(&e);
        Some(e)
    }

    fn record(&mut self, e: &Eval<T>) {
        if e.viol_max <= T::c(FEAS_TOL) {
            let replace = match &self.best_feasible {
                None => true,
                Some(b) => e.f < b.f,
            };
            if replace {
                self.best_feasible = Some(e.clone());
            }
        } else {
            let replace = match &self.best_infeasible {
                None => true,
                Some(b) => (e.viol_max, e.f) < (b.viol_max, b.f),
            };
            if replace {
                self.best_infeasible = Some(e.clone());
            }
        }
    }

    fn returned_point(&self) -> Eval<T> {
        self.best_feasible
            .clone()
            .or_else(|| self.best_infeasible.clone())
            .expect("at least the initial point was evaluated")
    }
}

/// Minimize the problem's objective subject to its inequality constraints.
/// Deterministic given the problem; respects the evaluation budget exactly.
pub fn minimize<T: Scalar>(problem: &OptProblem<'_, T>) -> Result<OptResult<T>, OptError> {
    let n = problem.dim;
    if n == 0 {
        return Err(OptError::InvalidProblem("dimension must be >= 1".into()));
    }
    if problem.initial.len() != n {
        return Err(OptError::InvalidProblem("initial point length mismatch".into()));
    }
    if !all_finite(&problem.initial) {
        return Err(OptError::InvalidProblem("initial point not finite".into()));
    }
    if !(problem.rho_start > problem.rho_end && problem.rho_end > T::zero()) {
        return Err(OptError::InvalidProblem(
            "radii must satisfy rho_start > rho_end > 0".into(),
        ));
    }
    if problem.max_evals == 0 {
        return Err(OptError::InvalidProblem("evaluation budget must be >= 1".into()));
    }

    let mut ev = Evaluator::new(problem);
    let first = (problem.objective)(&problem.initial);
    if !first.is_finite() {
        return Err(OptError::NonFiniteInitial);
    }
    // count the probe above as the first real evaluation
    ev.evals += 1;
    let mut c0 = Vec::with_capacity(problem.constraints.len());
    for con in &problem.constraints {
        ev.constraint_evals += 1;
        let v = con(&problem.initial);
        c0.push(if v.is_finite() { v } else { T::c(-WORST_CASE) });
    }
    let mut viol_sum = T::zero();
    let mut viol_max = T::zero();
    for &cj in &c0 {
        let v = (-cj).max(T::zero());
        viol_sum = viol_sum + v;
        viol_max = viol_max.max(v);
    }
    let init_eval = Eval {
        x: problem.initial.clone(),
        f: first,
        c: c0,
        viol_sum,
        viol_max,
    };
    ev.record(&init_eval);

    let mut rho = problem.rho_start;
    let mut simplex: Vec<Eval<T>> = vec![init_eval];
    let mut termination = build_initial_simplex(&mut ev, &mut simplex, rho, n);

    let m = problem.constraints.len();
    // penalty weight mu = k * gscale / ascale; gscale and ascale only grow,
    // so mu scales with the objective and never relaxes
    let mut k_pen = T::c(10.0);
    let mut gscale = T::zero();
    let mut ascale = T::zero();
    let mut stall = 0usize;
    let max_stall = 2 * n + 4;
    let mut repair_axis = 0usize;

    while termination.is_none() {
        if simplex.len() < n + 1 {
            termination = Some(Termination::EvalBudget);
            break;
        }
        sort_best_first(&mut simplex, k_pen, gscale, ascale, m);
        let base = simplex[0].clone();

        // geometry maintenance: keep vertex spread on the order of rho so
        // the linear models stay accurate as the radius shrinks
        let (far_idx, far_dist) = {
            let mut idx = 1usize;
            let mut dist = T::zero();
            for (i, p) in simplex.iter().enumerate().skip(1) {
                let d: T = p
                    .x
                    .iter()
                    .zip(&base.x)
                    .fold(T::zero(), |acc, (&a, &b)| acc.max((a - b).abs()));
                if d > dist {
                    dist = d;
                    idx = i;
                }
            }
            (idx, dist)
        };
        if far_dist > T::c(2.1) * rho {
            // re-seat the farthest vertex at an axis offset from the base,
            // skipping axes already occupied by another vertex
            let mut placed = false;
            for attempt in 0..n {
                let axis = (repair_axis + attempt) % n;
                let mut x = base.x.clone();
                x[axis] = x[axis] + rho;
                let occupied = simplex.iter().enumerate().any(|(i, p)| {
                    i != far_idx
                        && p.x
                            .iter()
                            .zip(&x)
                            .fold(T::zero(), |acc, (&a, &b)| acc.max((a - b).abs()))
                            < T::c(0.1) * rho
                });
                if occupied {
                    continue;
                }
                repair_axis = axis + 1;
                match ev.eval(&x) {
                    Some(e) => {
                        simplex[far_idx] = e;
                        placed = true;
                    }
                    None => termination = Some(Termination::EvalBudget),
                }
                break;
            }
            if termination.is_some() {
                break;
            }
            if placed {
                continue;
            }
        }

        // linear models from simplex edges
        let models = build_models(&simplex, m);
        let (g, a_rows) = match models {
            Some(v) => v,
            None => {
                // degenerate geometry: re-seat one point on an axis offset
                let axis = repair_axis % n;
                repair_axis += 1;
                let mut x = base.x.clone();
                x[axis] = x[axis] + rho;
                match ev.eval(&x) {
                    Some(e) => {
                        let victim = farthest_from(&simplex, &base.x);
                        simplex[victim] = e;
                        continue;
                    }
                    None => {
                        termination = Some(Termination::EvalBudget);
                        break;
                    }
                }
            }
        };

        gscale = gscale.max(norm_inf(&g));
        for a in &a_rows {
            ascale = ascale.max(norm_inf(a));
        }
        let mu = if m == 0 {
            T::zero()
        } else if ascale > T::zero() {
            k_pen * gscale.max(T::c(1e-30)) / ascale
        } else {
            k_pen * gscale.max(T::c(1e-30))
        };

        let (d, pred) = solve_subproblem(&g, &a_rows, &base.c, rho, mu, gscale);
        let scale_ref = gscale + mu * ascale;
        let pred_tol = T::c(1e-10) * rho * (scale_ref + T::one());

        if pred <= pred_tol {
            // model-optimal at this radius
            if rho <= problem.rho_end {
                termination = Some(Termination::RadiusConverged);
                break;
            }
            rho = (rho * T::half()).max(problem.rho_end);
            continue;
        }

        let trial_x: Vec<T> = base.x.iter().zip(&d).map(|(&xi, &di)| xi + di).collect();
        let trial = match ev.eval(&trial_x) {
            Some(e) => e,
            None => {
                termination = Some(Termination::EvalBudget);
                break;
            }
        };
        let merit_base = base.f + mu * base.viol_sum;
        let merit_trial = trial.f + mu * trial.viol_sum;
        let actual = merit_base - merit_trial;
        let ratio = actual / pred;

        // penalty adaptation: the step traded feasibility for objective
        if trial.viol_sum > base.viol_sum + T::c(FEAS_TOL) && trial.f < base.f {
            k_pen = (k_pen * T::two()).min(T::c(1e8));
        }

        if actual > T::zero() {
            stall = 0;
        } else if rho <= problem.rho_end {
            stall += 1;
            // at the final radius a small predicted reduction that fails to
            // realize means the model is optimal to within the radius
            let small_pred = pred <= T::c(1e-2) * rho * (scale_ref + T::one());
            if stall >= 3 && small_pred {
                termination = Some(Termination::RadiusConverged);
                break;
            }
            if stall > max_stall {
                termination = Some(Termination::Stall);
                break;
            }
        }

        // incorporate the trial point, preserving geometry
        let victim = {
            let mut worst_idx = 1usize;
            let mut worst_merit = T::neg_infinity();
            for (i, p) in simplex.iter().enumerate().skip(1) {
                let mv = p.f + mu * p.viol_sum;
                if mv > worst_merit {
                    worst_merit = mv;
                    worst_idx = i;
                }
            }
            if merit_trial < worst_merit {
                worst_idx
            } else {
                farthest_from(&simplex, &base.x)
            }
        };
        simplex[victim] = trial;

        let step_len = norm_inf(&d);
        if ratio < T::c(0.1) {
            rho = (rho * T::half()).max(problem.rho_end);
        } else if ratio > T::c(0.7) && step_len > T::c(0.9) * rho {
            rho = (rho * T::two()).min(problem.rho_start);
        }
    }

    let termination = termination.unwrap_or(Termination::Stall);
    let best = ev.returned_point();
    // recompute the violation from the constraints at the returned point
    let mut recomputed = T::zero();
    for con in &problem.constraints {
        ev.constraint_evals += 1;
        let v = con(&best.x);
        let v = if v.is_finite() { v } else { T::c(-WORST_CASE) };
        recomputed = recomputed.max((-v).max(T::zero()));
    }
    Ok(OptResult {
        best: best.x,
        best_objective: best.f,
        max_violation: recomputed,
        evals: ev.evals,
        constraint_evals: ev.constraint_evals,
        termination,
    })
}

/// One-line report of a finished solve, for the harness log.
pub fn solve_stats<T: Scalar>(result: &OptResult<T>) -> String {
    format!(
        "evals={} constraint_evals={} best={:.6e} violation={:.3e} termination={}",
        result.evals,
        result.constraint_evals,
        result.best_objective.to_f64().unwrap_or(f64::NAN),
        result.max_violation.to_f64().unwrap_or(f64::NAN),
        result.termination.as_str()
    )
}

fn build_initial_simplex<T: Scalar>(
    ev: &mut Evaluator<'_, '_, T>,
    simplex: &mut Vec<Eval<T>>,
    rho: T,
    n: usize,
) -> Option<Termination> {
    let base = simplex[0].x.clone();
    for i in 0..n {
        let mut x = base.clone();
        x[i] = x[i] + rho;
        match ev.eval(&x) {
            Some(e) => simplex.push(e),
            None => return Some(Termination::EvalBudget),
        }
    }
    None
}

fn sort_best_first<T: Scalar>(simplex: &mut [Eval<T>], k_pen: T, gscale: T, ascale: T, m: usize) {
    let mu = if m == 0 {
        T::zero()
    } else if ascale > T::zero() {
        k_pen * gscale / ascale
    } else {
        k_pen * gscale
    };
    let mut best = 0usize;
    let mut best_merit = simplex[0].f + mu * simplex[0].viol_sum;
    for (i, p) in simplex.iter().enumerate().skip(1) {
        let mv = p.f + mu * p.viol_sum;
        if mv < best_merit {
            best_merit = mv;
            best = i;
        }
    }
    simplex.swap(0, best);
}

fn farthest_from<T: Scalar>(simplex: &[Eval<T>], x0: &[T]) -> usize {
    let mut idx = 1usize;
    let mut best = T::neg_infinity();
    for (i, p) in simplex.iter().enumerate().skip(1) {
        let d: T = p
            .x
            .iter()
            .zip(x0)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum();
        if d > best {
            best = d;
            idx = i;
        }
    }
    idx
}

/// Interpolate linear models through the simplex: gradients of the objective
/// and of every constraint. `None` when the simplex is degenerate.
#[allow(clippy::type_complexity)]
fn build_models<T: Scalar>(simplex: &[Eval<T>], m: usize) -> Option<(Vec<T>, Vec<Vec<T>>)> {
    let base = &simplex[0];
    let edges: Vec<Vec<T>> = simplex[1..]
        .iter()
        .map(|p| p.x.iter().zip(&base.x).map(|(&a, &b)| a - b).collect())
        .collect();
    let e = Mat::from_rows(&edges);
    let mut rhs: Vec<Vec<T>> = Vec::with_capacity(m + 1);
    rhs.push(simplex[1..].iter().map(|p| p.f - base.f).collect());
    for j in 0..m {
        rhs.push(simplex[1..].iter().map(|p| p.c[j] - base.c[j]).collect());
    }
    let mut sols = e.lu_solve_multi(&rhs)?;
    let a_rows = sols.split_off(1);
    let g = sols.pop().unwrap();
    if !all_finite(&g) || a_rows.iter().any(|a| !all_finite(a)) {
        return None;
    }
    Some((g, a_rows))
}

/// Solve the trust-region subproblem
///
/// minimize  g.d + mu * sum_j max(0, -(c_j0 + a_j.d))   s.t. |d|_inf <= rho
///
/// exactly, as a linear program, and return the step together with the
/// predicted merit reduction.
fn solve_subproblem<T: Scalar>(
    g: &[T],
    a_rows: &[Vec<T>],
    c0: &[T],
    rho: T,
    mu: T,
    gscale: T,
) -> (Vec<T>, T) {
    let n = g.len();
    // keep only constraints that can be active or violated inside the box
    let mut keep: Vec<usize> = Vec::new();
    for (j, a) in a_rows.iter().enumerate() {
        let reach: T = a.iter().map(|&v| v.abs()).sum::<T>() * rho;
        if c0[j] - reach < T::zero() {
            keep.push(j);
        }
    }
    let mp = keep.len();

    // columns: y (n, d_i = y_i - rho), s (mp), t (mp surplus), w (n bound slack)
    let n_total = 2 * n + 2 * mp;
    let rows = n + mp;
    let mut a_eq = Mat::zeros(rows, n_total);
    let mut b_eq = vec![T::zero(); rows];
    let mut cost = vec![T::zero(); n_total];
    for i in 0..n {
        cost[i] = g[i];
    }
    for jj in 0..mp {
        cost[n + jj] = mu;
    }
    for (jj, &j) in keep.iter().enumerate() {
        let a = &a_rows[j];
        let mut shift = T::zero();
        for i in 0..n {
            a_eq[(jj, i)] = a[i];
            shift = shift + a[i];
        }
        a_eq[(jj, n + jj)] = T::one(); // s_j
        a_eq[(jj, n + mp + jj)] = -T::one(); // surplus
        b_eq[jj] = -c0[j] + rho * shift;
    }
    for i in 0..n {
        let r = mp + i;
        a_eq[(r, i)] = T::one();
        a_eq[(r, n + 2 * mp + i)] = T::one();
        b_eq[r] = T::two() * rho;
    }

    let zero_step = vec![T::zero(); n];
    let d = match simplex_lp(&cost, &a_eq, &b_eq) {
        Some(x) => {
            let mut d: Vec<T> = (0..n).map(|i| x[i] - rho).collect();
            // coordinates absent from objective and kept constraints carry no
            // information; do not move them
            for i in 0..n {
                let in_obj = g[i].abs() > T::c(1e-14) * gscale.max(T::one());
                let in_con = keep.iter().any(|&j| a_rows[j][i] != T::zero());
                if !in_obj && !in_con {
                    d[i] = T::zero();
                }
            }
            d
        }
        None => zero_step.clone(),
    };

    let merit = |dv: &[T]| -> T {
        let mut v = dot(g, dv);
        for &j in &keep {
            let cj = c0[j] + dot(&a_rows[j], dv);
            v = v + mu * (-cj).max(T::zero());
        }
        // constraints filtered out are satisfied across the whole box
        v
    };
    let pred = merit(&zero_step) - merit(&d);
    (d, pred)
}

/// Dense two-phase tableau simplex for `min c.x, A x = b, x >= 0`.
/// Bland's rule; deterministic. Returns `None` on infeasible or unbounded.
fn simplex_lp<T: Scalar>(c: &[T], a: &Mat<T>, b: &[T]) -> Option<Vec<T>> {
    let m = a.rows;
    let n = a.cols;
    if m == 0 {
        return Some(vec![T::zero(); n]);
    }
    // tableau: m rows of [A | I_art | rhs], one cost row
    let width = n + m + 1;
    let mut t = Mat::zeros(m + 1, width);
    for i in 0..m {
        let neg = b[i] < T::zero();
        for j in 0..n {
            t[(i, j)] = if neg { -a[(i, j)] } else { a[(i, j)] };
        }
        t[(i, n + i)] = T::one();
        t[(i, width - 1)] = if neg { -b[i] } else { b[i] };
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    // phase 1: minimize the sum of artificials
    for j in 0..width {
        let mut s = T::zero();
        for i in 0..m {
            s = s + t[(i, j)];
        }
        t[(m, j)] = -s;
    }
    for i in 0..m {
        // artificial columns have cost 1; their reduced costs start at zero
        t[(m, n + i)] = T::zero();
    }
    let tol = T::epsilon() * T::c(256.0);
    run_simplex(&mut t, &mut basis, n + m, tol)?;
    let phase1 = -t[(m, width - 1)];
    if phase1 > T::c(1e-7) {
        return None; // infeasible
    }
    // drive basic artificials out where possible
    for i in 0..m {
        if basis[i] >= n {
            let mut pivot_col = None;
            for j in 0..n {
                if t[(i, j)].abs() > tol {
                    pivot_col = Some(j);
                    break;
                }
            }
            if let Some(j) = pivot_col {
                pivot(&mut t, &mut basis, i, j);
            }
        }
    }

    // phase 2: rebuild the cost row for the true objective
    for j in 0..width {
        t[(m, j)] = T::zero();
    }
    for (j, &cj) in c.iter().enumerate() {
        t[(m, j)] = cj;
    }
    for i in 0..m {
        if basis[i] < n {
            let cb = c[basis[i]];
            if cb != T::zero() {
                for j in 0..width {
                    let v = cb * t[(i, j)];
                    t[(m, j)] = t[(m, j)] - v;
                }
            }
        }
    }
    let cost_tol = {
        let cn = norm_inf(c);
        if cn > T::zero() {
            cn * T::epsilon() * T::c(256.0)
        } else {
            tol
        }
    };
    run_simplex(&mut t, &mut basis, n, cost_tol)?;

    let mut x = vec![T::zero(); n];
    for i in 0..m {
        if basis[i] < n {
            x[basis[i]] = t[(i, width - 1)];
        }
    }
    Some(x)
}

/// Pivot until optimal. `allowed_cols` limits entering columns (excludes
/// artificials in phase 2). Returns `None` when unbounded.
fn run_simplex<T: Scalar>(
    t: &mut Mat<T>,
    basis: &mut [usize],
    allowed_cols: usize,
    tol: T,
) -> Option<()> {
    let m = t.rows - 1;
    let width = t.cols;
    let max_iters = 50 * (m + allowed_cols) + 200;
    for _ in 0..max_iters {
        // Bland: smallest index with negative reduced cost
        let mut entering = None;
        for j in 0..allowed_cols {
            if t[(m, j)] < -tol {
                entering = Some(j);
                break;
            }
        }
        let j = match entering {
            Some(j) => j,
            None => return Some(()),
        };
        // ratio test; tie broken by smallest basis index (Bland)
        let mut leave: Option<(usize, T)> = None;
        for i in 0..m {
            let aij = t[(i, j)];
            if aij > tol {
                let ratio = t[(i, width - 1)] / aij;
                match leave {
                    None => leave = Some((i, ratio)),
                    Some((li, lr)) => {
                        if ratio < lr || (ratio == lr && basis[i] < basis[li]) {
                            leave = Some((i, ratio));
                        }
                    }
                }
            }
        }
        let (i, _) = leave?; // None: unbounded
        pivot(t, basis, i, j);
    }
    // iteration cap: treat as stalled-optimal at the current vertex
    Some(())
}

fn pivot<T: Scalar>(t: &mut Mat<T>, basis: &mut [usize], row: usize, col: usize) {
    let m = t.rows - 1;
    let width = t.cols;
    let p = t[(row, col)];
    for j in 0..width {
        t[(row, j)] = t[(row, j)] / p;
    }
    for i in 0..=m {
        if i == row {
            continue;
        }
        let factor = t[(i, col)];
        if factor == T::zero() {
            continue;
        }
        for j in 0..width {
            let v = factor * t[(row, j)];
            t[(i, j)] = t[(i, j)] - v;
        }
    }
    basis[row] = col;
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    fn quadratic_problem<'a>(max_evals: usize) -> OptProblem<'a, f64> {
        OptProblem {
            dim: 2,
            objective: Box::new(|x| (x[0] - 1.0).powi(2) + (x[1] - 2.0).powi(2)),
            constraints: vec![],
            initial: vec![0.0, 0.0],
            rho_start: 0.5,
            rho_end: 1e-6,
            max_evals,
        }
    }

    #[test]
    fn lp_solver_basic() {
        // min -x - y s.t. x + y + s = 1, x,y,s >= 0  -> x + y = 1, obj -1
        let a = Mat::from_rows(&[vec![1.0f64, 1.0, 1.0]]);
        let x = simplex_lp(&[-1.0, -1.0, 0.0], &a, &[1.0]).unwrap();
        assert!((x[0] + x[1] - 1.0).abs() < 1e-12);
        assert!(x[2].abs() < 1e-12);
    }

    #[test]
    fn unconstrained_quadratic() {
        let p = quadratic_problem(2000);
        let r = minimize(&p).unwrap();
        assert!((r.best[0] - 1.0).abs() < 1e-4, "x = {:?}", r.best);
        assert!((r.best[1] - 2.0).abs() < 1e-4, "x = {:?}", r.best);
        assert_eq!(r.termination, Termination::RadiusConverged);
    }

    #[test]
    fn active_constraint_kkt() {
        // constraint x <= 0.5 active at the optimum (0.5, 2); KKT by hand
        let p = OptProblem {
            dim: 2,
            objective: Box::new(|x: &[f64]| (x[0] - 1.0).powi(2) + (x[1] - 2.0).powi(2)),
            constraints: vec![Box::new(|x: &[f64]| 0.5 - x[0])],
            initial: vec![0.0, 0.0],
            rho_start: 0.5,
            rho_end: 1e-6,
            max_evals: 3000,
        };
        let r = minimize(&p).unwrap();
        assert!((r.best[0] - 0.5).abs() < 1e-3, "x = {:?}", r.best);
        assert!((r.best[1] - 2.0).abs() < 1e-3, "x = {:?}", r.best);
        assert!(r.max_violation <= 1e-8);
    }

    #[test]
    fn linear_program_reaches_vertex() {
        // min -x - 2y s.t. x + y <= 1, x >= 0, y >= 0: optimum (0, 1)
        let p = OptProblem {
            dim: 2,
            objective: Box::new(|x: &[f64]| -x[0] - 2.0 * x[1]),
            constraints: vec![
                Box::new(|x: &[f64]| 1.0 - x[0] - x[1]),
                Box::new(|x: &[f64]| x[0]),
                Box::new(|x: &[f64]| x[1]),
            ],
            initial: vec![0.2, 0.2],
            rho_start: 0.5,
            rho_end: 1e-7,
            max_evals: 3000,
        };
        let r = minimize(&p).unwrap();
        assert!((r.best[0] - 0.0).abs() < 1e-4, "x = {:?}", r.best);
        assert!((r.best[1] - 1.0).abs() < 1e-4, "x = {:?}", r.best);
    }

    #[test]
    fn budget_respected_exactly() {
        let count = Cell::new(0usize);
        let p = OptProblem {
            dim: 2,
            objective: Box::new(|x: &[f64]| {
                count.set(count.get() + 1);
                (x[0] - 1.0).powi(2) + (x[1] - 2.0).powi(2)
            }),
            constraints: vec![],
            initial: vec![0.0, 0.0],
            rho_start: 0.5,
            rho_end: 1e-9,
            max_evals: 17,
        };
        let r = minimize(&p).unwrap();
        assert_eq!(r.evals, 17);
        assert_eq!(count.get(), 17);
        assert_eq!(r.termination, Termination::EvalBudget);
    }

    #[test]
    fn deterministic_repeat() {
        let r1 = minimize(&quadratic_problem(500)).unwrap();
        let r2 = minimize(&quadratic_problem(500)).unwrap();
        assert_eq!(r1.best, r2.best);
        assert_eq!(r1.evals, r2.evals);
    }

    #[test]
    fn monotone_incumbent_from_feasible_start() {
        let p = quadratic_problem(100);
        let f0 = 1.0f64.powi(2) + 2.0f64.powi(2);
        let r = minimize(&p).unwrap();
        assert!(r.best_objective <= f0);
    }

    #[test]
    fn feasibility_priority() {
        // start infeasible; a feasible point exists and must be returned
        let p = OptProblem {
            dim: 1,
            objective: Box::new(|x: &[f64]| x[0] * x[0]),
            constraints: vec![Box::new(|x: &[f64]| x[0] - 1.0)], // x >= 1
            initial: vec![-2.0],
            rho_start: 0.5,
            rho_end: 1e-6,
            max_evals: 500,
        };
        let r = minimize(&p).unwrap();
        assert!(r.max_violation <= 1e-8, "violation {}", r.max_violation);
        assert!((r.best[0] - 1.0).abs() < 1e-3, "x = {:?}", r.best);
    }

    #[test]
    fn non_finite_initial_is_error() {
        let p = OptProblem {
            dim: 1,
            objective: Box::new(|_: &[f64]| f64::NAN),
            constraints: vec![],
            initial: vec![0.0],
            rho_start: 0.5,
            rho_end: 1e-6,
            max_evals: 100,
        };
        assert!(matches!(minimize(&p), Err(OptError::NonFiniteInitial)));
    }

    #[test]
    fn non_finite_later_is_worst_case_and_continues() {
        // objective blows up left of -0.5 but the optimum at +1 is reachable
        let p = OptProblem {
            dim: 1,
            objective: Box::new(|x: &[f64]| {
                if x[0] < -0.5 {
                    f64::NAN
                } else {
                    (x[0] - 1.0).powi(2)
                }
            }),
            constraints: vec![],
            initial: vec![0.0],
            rho_start: 0.5,
            rho_end: 1e-6,
            max_evals: 500,
        };
        let r = minimize(&p).unwrap();
        assert!((r.best[0] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn solve_stats_reports_termination() {
        let r = minimize(&quadratic_problem(17)).unwrap();
        assert!(solve_stats(&r).contains("eval-budget"));
        let r2 = minimize(&quadratic_problem(2000)).unwrap();
        assert!(solve_stats(&r2).contains("radius-converged"));
    }
}
