//! Sparse direct solves and the semismooth Newton iteration for the
//! discrete HJB problem.

use std::io::Write;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseRowMat, SymbolicSparseRowMat};
use faer::Mat;

use crate::analysis::lambda_norm;
use crate::error::{Error, Result};
use crate::fespace::HermiteSpace;
use crate::forms::{Assembler, SparseSystem};
use crate::problems::{HjbProblem, NondivProblem};

/// Solves `A x = b` by equilibrated sparse LU with a fill-reducing ordering
/// and one refinement step, then checks
/// `‖Ax - b‖∞ ≤ 1e-10 (‖A‖∞‖x‖∞ + ‖b‖∞)`.
pub fn sparse_lu_solve(system: &SparseSystem) -> Result<Vec<f64>> {
    let n = system.n;
    if system.rhs.len() != n || system.row_ptr.len() != n + 1 {
        return Err(Error::InvalidArgument("inconsistent system dimensions".into()));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let (row_scale, col_scale) = equilibrate(system);
    let mut values = system.values.clone();
    for i in 0..n {
        for p in system.row_ptr[i]..system.row_ptr[i + 1] {
            values[p] *= row_scale[i] * col_scale[system.col_idx[p]];
        }
    }
    let symbolic = SymbolicSparseRowMat::new_checked(n, n, system.row_ptr.clone(), None, system.col_idx.clone());
    let mat = SparseRowMat::new(symbolic, values);
    let lu = mat
        .as_ref()
        .sp_lu()
        .map_err(|e| Error::SingularMatrix(format!("sparse LU failed: {e}")))?;
    let mut rhs = Mat::<f64>::zeros(n, 1);
    let mut x = vec![0.0; n];
    let mut residual = system.rhs.clone();
    // second pass is one step of iterative refinement
    for _ in 0..2 {
        for i in 0..n {
            rhs[(i, 0)] = residual[i] * row_scale[i];
        }
        lu.solve_in_place(rhs.as_mut());
        for i in 0..n {
            x[i] += rhs[(i, 0)] * col_scale[i];
        }
        residual = accurate_residual(system, &x);
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularMatrix("non-finite solution".into()));
    }
    let ax = system.matvec(&x);
    let res = ax.iter().zip(&system.rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let xn = x.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let bn = system.rhs.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let bound = 1e-10 * (system.norm_inf() * xn + bn);
    if res > bound {
        return Err(Error::SingularMatrix(format!("residual {res:e} exceeds {bound:e}")));
    }
    Ok(x)
}

/// `b - Ax` accumulated with error-free transformations (twice the working
/// precision).
fn accurate_residual(system: &SparseSystem, x: &[f64]) -> Vec<f64> {
    (0..system.n)
        .map(|i| {
            let (mut s, mut c) = (system.rhs[i], 0.0);
            for p in system.row_ptr[i]..system.row_ptr[i + 1] {
                let a = -system.values[p];
                let b = x[system.col_idx[p]];
                let prod = a * b;
                let prod_err = a.mul_add(b, -prod);
                let t = s + prod;
                let z = t - s;
                let sum_err = (s - (t - z)) + (prod - z);
                s = t;
                c += sum_err + prod_err;
            }
            s + c
        })
        .collect()
}

/// Row then column scaling to unit max-norm.
fn equilibrate(system: &SparseSystem) -> (Vec<f64>, Vec<f64>) {
    let n = system.n;
    let mut row = vec![1.0; n];
    for i in 0..n {
        let m = system.values[system.row_ptr[i]..system.row_ptr[i + 1]].iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if m > 0.0 {
            row[i] = 1.0 / m;
        }
    }
    let mut colmax = vec![0.0f64; n];
    for i in 0..n {
        for p in system.row_ptr[i]..system.row_ptr[i + 1] {
            let c = system.col_idx[p];
            colmax[c] = colmax[c].max((system.values[p] * row[i]).abs());
        }
    }
    let col = colmax.iter().map(|&m| if m > 0.0 { 1.0 / m } else { 1.0 }).collect();
    (row, col)
}

/// Discrete solution of the linear problem as a full DOF vector.
pub fn solve_nondiv(space: &HermiteSpace<'_>, problem: &NondivProblem) -> Result<Vec<f64>> {
    solve_nondiv_with(space, problem, problem.epsilon)
}

/// As [`solve_nondiv`] with face coefficient `2 - √(1 - eps_used)`.
pub fn solve_nondiv_with(space: &HermiteSpace<'_>, problem: &NondivProblem, eps_used: f64) -> Result<Vec<f64>> {
    let system = Assembler::new(space)?.nondiv_system(problem, eps_used)?;
    Ok(space.expand(&sparse_lu_solve(&system)?))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonStep {
    pub iteration: usize,
    /// `‖u^j - u^{j-1}‖_{λ,h}`
    pub increment_norm: f64,
    /// Euclidean norm of the residual at `u^j`.
    pub residual_norm: f64,
    /// Quadrature points whose maximizer changed from the previous step.
    pub controls_changed: usize,
}

#[derive(Clone, Debug, Default)]
pub struct NewtonHistory {
    pub steps: Vec<NewtonStep>,
}

impl NewtonHistory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// CSV with header `iteration,increment_norm,residual_norm,controls_changed`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iteration", "increment_norm", "residual_norm", "controls_changed"])?;
        for s in &self.steps {
            w.write_record([
                s.iteration.to_string(),
                format!("{:e}", s.increment_norm),
                format!("{:e}", s.residual_norm),
                s.controls_changed.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NewtonStatus {
    Converged,
    MaxIterations,
}

#[derive(Clone, Debug)]
pub struct NewtonOutcome {
    /// Last iterate, full DOF vector.
    pub solution: Vec<f64>,
    pub history: NewtonHistory,
    pub status: NewtonStatus,
}

fn euclid(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Semismooth Newton iteration from `u0` (full DOF vector). Each step
/// freezes the pointwise maximizer of `L^α u^j - f^α` and solves the
/// resulting linear problem. Stops once the increment drops below `tol`
/// or the control field repeats exactly (the next step would reproduce
/// the same iterate).
pub fn semismooth_newton(
    space: &HermiteSpace<'_>,
    hjb: &HjbProblem,
    u0: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<NewtonOutcome> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    if u0.len() != space.ndofs() {
        return Err(Error::InvalidArgument(format!("initial guess has {} entries, expected {}", u0.len(), space.ndofs())));
    }
    let asm = Assembler::new(space)?;
    let mut u = u0.to_vec();
    let (mut field, _) = asm.hjb_point_data(hjb, &u)?;
    let mut history = NewtonHistory::default();
    let mut status = NewtonStatus::MaxIterations;
    for j in 1..=max_iter {
        let system = asm.hjb_linearization(hjb, &field)?;
        let next = space.expand(&sparse_lu_solve(&system)?);
        let diff: Vec<f64> = next.iter().zip(&u).map(|(a, b)| a - b).collect();
        let increment_norm = lambda_norm(space, &diff, hjb.lambda)?;
        let (next_field, residual) = asm.hjb_point_data(hjb, &next)?;
        let controls_changed = next_field.changed_from(&field);
        history.steps.push(NewtonStep { iteration: j, increment_norm, residual_norm: euclid(&residual), controls_changed });
        u = next;
        field = next_field;
        if !increment_norm.is_finite() {
            return Err(Error::SingularMatrix(format!("Newton step {j} produced a non-finite iterate")));
        }
        if increment_norm < tol || controls_changed == 0 {
            status = NewtonStatus::Converged;
            break;
        }
    }
    Ok(NewtonOutcome { solution: u, history, status })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::uniform_rect_mesh;
    use crate::problems::{exp3, ControlSet};

    fn dense_system(rows: &[&[f64]], rhs: &[f64]) -> SparseSystem {
        let mut t = Vec::new();
        for (i, r) in rows.iter().enumerate() {
            for (j, &v) in r.iter().enumerate() {
                if v != 0.0 {
                    t.push((i, j, v));
                }
            }
        }
        SparseSystem::from_triplets(rows.len(), t, rhs.to_vec(), (0..rows.len()).collect())
    }

    #[test]
    fn identity_and_two_by_two() {
        let s = dense_system(&[&[1.0, 0.0], &[0.0, 1.0]], &[3.5, -2.0]);
        assert_eq!(sparse_lu_solve(&s).unwrap(), vec![3.5, -2.0]);
        let s = dense_system(&[&[2.0, 1.0], &[1.0, 2.0]], &[3.0, 3.0]);
        let x = sparse_lu_solve(&s).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn nonsymmetric_system() {
        let s = dense_system(&[&[0.0, 2.0, 0.0], &[1.0, 0.0, 3.0], &[0.0, 1.0, 4.0]], &[2.0, 4.0, 5.0]);
        let x = sparse_lu_solve(&s).unwrap();
        for (a, b) in x.iter().zip([1.0, 1.0, 1.0]) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn singular_system_is_reported() {
        let s = dense_system(&[&[1.0, 1.0], &[1.0, 1.0]], &[1.0, 2.0]);
        assert!(matches!(sparse_lu_solve(&s), Err(Error::SingularMatrix(_))));
        let s = dense_system(&[&[1.0, 0.0], &[0.0, 0.0]], &[1.0, 2.0]);
        assert!(matches!(sparse_lu_solve(&s), Err(Error::SingularMatrix(_))));
    }

    #[test]
    fn history_csv() {
        let h = NewtonHistory {
            steps: vec![NewtonStep { iteration: 1, increment_norm: 0.5, residual_norm: 1e-3, controls_changed: 4 }],
        };
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "iteration,increment_norm,residual_norm,controls_changed\n1,5e-1,1e-3,4\n");
    }

    #[test]
    fn single_control_converges_in_one_step() {
        let m = uniform_rect_mesh(0.0, 1.0, 0.0, 1.0, 2).unwrap();
        let s = HermiteSpace::new(&m, 3).unwrap();
        let hjb = exp3().with_control_set(ControlSet::single([0.5, 0.25]));
        let out = semismooth_newton(&s, &hjb, &vec![0.0; s.ndofs()], 1e-8, 10).unwrap();
        assert_eq!(out.status, NewtonStatus::Converged);
        assert_eq!(out.history.len(), 1);
        assert!(out.history.steps[0].residual_norm < 1e-9);
        assert!(semismooth_newton(&s, &hjb, &[0.0], 1e-8, 10).is_err());
        assert!(semismooth_newton(&s, &hjb, &vec![0.0; s.ndofs()], 0.0, 10).is_err());
    }
}
