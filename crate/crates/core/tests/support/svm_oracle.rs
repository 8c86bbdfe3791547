//! Exhaustive SVM dual oracle and fixtures shared by test targets.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use tagasc::svm::{gram, train_binary, BinarySolution, KernelSpec, SmoParams};

/// Maximizes `Σα − ½αᵀQα` over `0 ≤ α ≤ C`, `yᵀα = 0` by enumerating every
/// assignment of each αᵢ to {0, C, free} and solving the equality-constrained
/// stationarity system on the free set. Exact for positive-definite Q.
pub fn brute_force_dual(k: &[Vec<f64>], y: &[f64], c: f64) -> f64 {
    let n = y.len();
    let q = DMatrix::from_fn(n, n, |i, j| y[i] * y[j] * k[i][j]);
    let dual = |a: &DVector<f64>| a.sum() - 0.5 * (a.transpose() * &q * a)[(0, 0)];
    let mut best = f64::NEG_INFINITY;
    for code in 0..3usize.pow(n as u32) {
        let mut state = vec![0u8; n];
        let mut r = code;
        for s in state.iter_mut() {
            *s = (r % 3) as u8;
            r /= 3;
        }
        let mut alpha = DVector::from_fn(n, |i, _| if state[i] == 1 { c } else { 0.0 });
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 2).collect();
        let m = free.len();
        let bound_sum: f64 = (0..n).map(|i| y[i] * alpha[i]).sum();
        if m == 0 {
            if bound_sum.abs() > 1e-9 {
                continue;
            }
        } else {
            // [Q_FF y_F; y_Fᵀ 0] [α_F; ν] = [1 − Q_F,B α_B; −y_Bᵀα_B]
            let mut a = DMatrix::zeros(m + 1, m + 1);
            let mut b = DVector::zeros(m + 1);
            for (r, &i) in free.iter().enumerate() {
                for (s, &j) in free.iter().enumerate() {
                    a[(r, s)] = q[(i, j)];
                }
                a[(r, m)] = y[i];
                a[(m, r)] = y[i];
                b[r] = 1.0 - (0..n).map(|j| q[(i, j)] * alpha[j]).sum::<f64>();
            }
            b[m] = -bound_sum;
            let Some(sol) = a.lu().solve(&b) else {
                continue;
            };
            if free
                .iter()
                .enumerate()
                .any(|(r, _)| !(sol[r] > 0.0 && sol[r] < c))
            {
                continue;
            }
            for (r, &i) in free.iter().enumerate() {
                alpha[i] = sol[r];
            }
        }
        best = best.max(dual(&alpha));
    }
    best
}

pub fn min_eigenvalue(k: &[Vec<f64>]) -> f64 {
    let n = k.len();
    let m = DMatrix::from_fn(n, n, |i, j| k[i][j]);
    SymmetricEigen::new(m).eigenvalues.min()
}

/// First violated KKT condition of a converged solution, if any.
pub fn kkt_violation(
    sol: &BinarySolution,
    x: &[Vec<f64>],
    y: &[f64],
    spec: &KernelSpec,
    c: f64,
    tol: f64,
) -> Result<(), String> {
    if !sol.converged {
        return Err("solver did not converge".into());
    }
    for i in 0..x.len() {
        let a = sol.alpha[i];
        if !(0.0..=c).contains(&a) {
            return Err(format!("alpha {a} outside [0, {c}]"));
        }
        let yf = y[i] * sol.decision(x, y, spec, &x[i]).unwrap();
        if a <= 0.0 && yf < 1.0 - tol {
            return Err(format!("point {i}: alpha=0 but y f = {yf}"));
        }
        if a >= c && yf > 1.0 + tol {
            return Err(format!("point {i}: alpha=C but y f = {yf}"));
        }
        if a > 0.0 && a < c && (yf - 1.0).abs() > tol {
            return Err(format!("point {i}: free alpha but y f = {yf}"));
        }
    }
    let balance: f64 = sol.alpha.iter().zip(y).map(|(a, b)| a * b).sum();
    if balance.abs() >= 1e-9 {
        return Err(format!("sum alpha y = {balance}"));
    }
    Ok(())
}

pub fn fixtures() -> Vec<(Vec<Vec<f64>>, Vec<f64>)> {
    vec![
        (vec![vec![-1.0], vec![1.0]], vec![-1.0, 1.0]),
        (
            vec![
                vec![0.0, 0.0],
                vec![1.0, 0.2],
                vec![0.3, 1.1],
                vec![2.0, 2.0],
                vec![2.5, 1.4],
                vec![1.2, 2.6],
            ],
            vec![-1.0, -1.0, -1.0, 1.0, 1.0, 1.0],
        ),
        (
            vec![
                vec![0.0, 0.0],
                vec![1.0, 1.0],
                vec![0.2, 0.9],
                vec![0.8, 0.1],
                vec![0.5, 0.5],
                vec![1.5, 0.4],
                vec![-0.4, 0.7],
                vec![0.9, -0.6],
            ],
            vec![-1.0, 1.0, 1.0, -1.0, 1.0, -1.0, -1.0, 1.0],
        ),
        (
            vec![
                vec![0.1, -0.2, 0.3],
                vec![-0.5, 0.4, 0.0],
                vec![0.9, 0.8, -0.7],
                vec![0.0, 0.6, 0.6],
                vec![-0.8, -0.9, 0.2],
            ],
            vec![1.0, -1.0, 1.0, -1.0, -1.0],
        ),
    ]
}

/// Nearly orthogonal points, for which small-gamma sigmoid Gram matrices are
/// diagonally dominant and hence positive definite.
pub fn near_orthogonal(n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let x = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let bump = if i == j { 1.5 } else { 0.0 };
                    bump + 0.2 * (1.7 * i as f64 + 0.9 * j as f64).sin()
                })
                .collect()
        })
        .collect();
    let y = (0..n)
        .map(|i| if i % 3 == 0 { 1.0 } else { -1.0 })
        .collect();
    (x, y)
}

pub fn rbf_cases() -> Vec<Case> {
    let mut out = Vec::new();
    for (x, y) in fixtures() {
        for (spec, c) in [(KernelSpec::rbf(0.5), 1.0), (KernelSpec::rbf(2.0), 10.0)] {
            out.push((x.clone(), y.clone(), spec, c));
        }
    }
    out
}

pub fn sigmoid_cases() -> Vec<Case> {
    let mut sets = vec![near_orthogonal(4), near_orthogonal(6), near_orthogonal(8)];
    sets.push((sets[1].0.clone(), vec![1.0, 1.0, -1.0, -1.0, 1.0, -1.0]));
    let mut out = Vec::new();
    for (x, y) in sets {
        for (spec, c) in [
            (KernelSpec::sigmoid(0.2, 0.0), 1.0),
            (KernelSpec::sigmoid(0.3, 0.1), 10.0),
            (KernelSpec::sigmoid(0.1, 0.2), 0.5),
        ] {
            out.push((x.clone(), y.clone(), spec, c));
        }
    }
    out
}

pub type Case = (Vec<Vec<f64>>, Vec<f64>, KernelSpec, f64);

/// SMO dual gap against the oracle for one case, after checking the Gram
/// matrix is positive definite and the solution satisfies KKT.
pub fn check_case(case: &Case, tol: f64) -> Result<f64, String> {
    let (x, y, spec, c) = case;
    let k = gram(x, spec).unwrap();
    // the oracle is exact for strictly concave duals; fixtures are chosen so
    let min_eig = min_eigenvalue(&k);
    if min_eig <= 1e-8 {
        return Err(format!(
            "{spec:?} fixture of {} points is not PD ({min_eig})",
            x.len()
        ));
    }
    let params = SmoParams {
        c: *c,
        tol,
        max_iter: 100_000,
    };
    let sol = train_binary(x, y, spec, &params).unwrap();
    let oracle = brute_force_dual(&k, y, *c);
    kkt_violation(&sol, x, y, spec, *c, tol)?;
    Ok((sol.dual_objective - oracle).abs())
}
