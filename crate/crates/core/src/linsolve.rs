//! Restarted GMRES with a left preconditioner, used by the Newton inner solver.

/// Outcome of a GMRES solve.
#[derive(Debug, Clone, Copy)]
pub(crate) struct GmresStats {
    pub iterations: usize,
    /// Preconditioned residual norm relative to the preconditioned right-hand side.
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solve `A x = b` from the initial guess in `x`.
///
/// `apply(v, out)` computes `out = A v`; `precond(v)` applies `M^{-1}` in place. The
/// iteration minimizes `||M^{-1}(b - A x)||` over Krylov spaces of dimension `restart`.
pub(crate) fn gmres(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    precond: impl Fn(&mut [f64]),
    b: &[f64],
    x: &mut [f64],
    restart: usize,
    max_iters: usize,
    rtol: f64,
) -> GmresStats {
    let n = b.len();
    let restart = restart.clamp(1, n.max(1));
    let mut rhs = b.to_vec();
    precond(&mut rhs);
    let bnorm = norm(&rhs);
    if bnorm == 0.0 {
        x.fill(0.0);
        return GmresStats {
            iterations: 0,
            relative_residual: 0.0,
        };
    }

    let mut w = vec![0.0; n];
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(restart + 1);
    let mut h = vec![vec![0.0; restart]; restart + 1];
    let mut cs = vec![0.0; restart];
    let mut sn = vec![0.0; restart];
    let mut g = vec![0.0; restart + 1];
    let mut total = 0;
    let mut rel = f64::INFINITY;

    while total < max_iters {
        apply(x, &mut w);
        let mut r: Vec<f64> = b.iter().zip(&w).map(|(b, a)| b - a).collect();
        precond(&mut r);
        let beta = norm(&r);
        rel = beta / bnorm;
        if rel <= rtol {
            break;
        }
        basis.clear();
        basis.push(r.iter().map(|v| v / beta).collect());
        g.fill(0.0);
        g[0] = beta;

        let mut used = 0;
        for j in 0..restart {
            apply(&basis[j], &mut w);
            precond(&mut w);
            // Modified Gram-Schmidt.
            for (i, v) in basis.iter().enumerate() {
                let hij = dot(&w, v);
                h[i][j] = hij;
                for (wk, vk) in w.iter_mut().zip(v) {
                    *wk -= hij * vk;
                }
            }
            let hn = norm(&w);
            h[j + 1][j] = hn;

            for i in 0..j {
                let t = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let denom = h[j][j].hypot(h[j + 1][j]);
            if denom == 0.0 {
                cs[j] = 1.0;
                sn[j] = 0.0;
            } else {
                cs[j] = h[j][j] / denom;
                sn[j] = h[j + 1][j] / denom;
            }
            h[j][j] = denom;
            h[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];

            used = j + 1;
            total += 1;
            rel = g[j + 1].abs() / bnorm;
            if rel <= rtol || hn == 0.0 || total >= max_iters {
                break;
            }
            basis.push(w.iter().map(|v| v / hn).collect());
        }

        let mut y = vec![0.0; used];
        for i in (0..used).rev() {
            let s: f64 = (i + 1..used).map(|l| h[i][l] * y[l]).sum();
            y[i] = if h[i][i] != 0.0 { (g[i] - s) / h[i][i] } else { 0.0 };
        }
        for (i, yi) in y.iter().enumerate() {
            for (xk, vk) in x.iter_mut().zip(&basis[i]) {
                *xk += yi * vk;
            }
        }
        if rel <= rtol {
            break;
        }
    }
    GmresStats {
        iterations: total,
        relative_residual: rel,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_nonsymmetric_system() {
        let a = [[4.0, 1.0, 0.0], [2.0, 5.0, 1.0], [0.0, 3.0, 6.0]];
        let x_true = [1.0, -2.0, 0.5];
        let b: Vec<f64> = a.iter().map(|row| dot(row, &x_true)).collect();
        let mut x = vec![0.0; 3];
        let stats = gmres(
            |v, out| {
                for (o, row) in out.iter_mut().zip(&a) {
                    *o = dot(row, v);
                }
            },
            |_| {},
            &b,
            &mut x,
            3,
            20,
            1e-14,
        );
        assert!(stats.relative_residual <= 1e-14);
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn diagonal_preconditioner_makes_diagonal_systems_trivial() {
        let d: Vec<f64> = (1..=50).map(|i| (i * i) as f64).collect();
        let b = vec![1.0; 50];
        let mut x = vec![0.0; 50];
        let stats = gmres(
            |v, out| {
                for ((o, vi), di) in out.iter_mut().zip(v).zip(&d) {
                    *o = di * vi;
                }
            },
            |v| {
                for (vi, di) in v.iter_mut().zip(&d) {
                    *vi /= di;
                }
            },
            &b,
            &mut x,
            10,
            50,
            1e-14,
        );
        assert!(stats.iterations <= 1);
        assert!((x[49] - 1.0 / 2500.0).abs() < 1e-15);
    }
}
