//! Scalar abstraction and small tensor utilities.
//!
//! Curvature formulas are written once against the [`Scalar`] trait and then
//! run over two backends: Taylor jets (pointwise, exact derivatives) and
//! periodic grid fields (finite-difference derivatives). Tensors are plain
//! nested `Vec`s built from closures; dimensions stay at 2 or 3 so the dense
//! representation is cheap and the index gymnastics stay readable.

use crate::taylor::Jet;

/// A differentiable scalar quantity. `dx` takes a *spatial* axis
/// (`0..n`); time derivatives are backend-specific and live outside the
/// trait.
pub trait Scalar: Clone {
    fn zero_like(&self) -> Self;
    fn const_like(&self, v: f64) -> Self;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn neg(&self) -> Self;
    fn scale(&self, k: f64) -> Self;
    fn recip(&self) -> Self;
    fn dx(&self, axis: usize) -> Self;
    /// Representative magnitude, used only for degeneracy guards.
    fn magnitude(&self) -> f64;
}

impl Scalar for Jet {
    fn zero_like(&self) -> Self {
        self.const_like(0.0)
    }
    fn const_like(&self, v: f64) -> Self {
        // Constants are exact to any order: full space validity, so they
        // never clip a partner's degree.
        Jet::constant(self.space(), v)
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn neg(&self) -> Self {
        -self
    }
    fn scale(&self, k: f64) -> Self {
        Jet::scale(self, k)
    }
    fn recip(&self) -> Self {
        Jet::recip(self)
    }
    fn dx(&self, axis: usize) -> Self {
        self.deriv(axis + 1)
    }
    fn magnitude(&self) -> f64 {
        self.value().abs()
    }
}

pub type T1<S> = Vec<S>;
pub type T2<S> = Vec<Vec<S>>;
pub type T3<S> = Vec<Vec<Vec<S>>>;
pub type T4<S> = Vec<Vec<Vec<Vec<S>>>>;
pub type T5<S> = Vec<Vec<Vec<Vec<Vec<S>>>>>;

pub fn t1<S>(n: usize, mut f: impl FnMut(usize) -> S) -> T1<S> {
    (0..n).map(|i| f(i)).collect()
}

pub fn t2<S>(n: usize, mut f: impl FnMut(usize, usize) -> S) -> T2<S> {
    (0..n).map(|i| (0..n).map(|j| f(i, j)).collect()).collect()
}

pub fn t3<S>(n: usize, mut f: impl FnMut(usize, usize, usize) -> S) -> T3<S> {
    (0..n)
        .map(|i| (0..n).map(|j| (0..n).map(|k| f(i, j, k)).collect()).collect())
        .collect()
}

pub fn t4<S>(n: usize, mut f: impl FnMut(usize, usize, usize, usize) -> S) -> T4<S> {
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    (0..n)
                        .map(|k| (0..n).map(|l| f(i, j, k, l)).collect())
                        .collect()
                })
                .collect()
        })
        .collect()
}

pub fn t5<S>(
    n: usize,
    mut f: impl FnMut(usize, usize, usize, usize, usize) -> S,
) -> T5<S> {
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    (0..n)
                        .map(|k| {
                            (0..n)
                                .map(|l| (0..n).map(|m| f(i, j, k, l, m)).collect())
                                .collect()
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// Contraction helpers: sum a closure over 1..4 dummy indices.
pub fn sum1<S: Scalar>(proto: &S, n: usize, mut f: impl FnMut(usize) -> S) -> S {
    let mut acc = proto.zero_like();
    for p in 0..n {
        acc = acc.add(&f(p));
    }
    acc
}

pub fn sum2<S: Scalar>(
    proto: &S,
    n: usize,
    mut f: impl FnMut(usize, usize) -> S,
) -> S {
    let mut acc = proto.zero_like();
    for p in 0..n {
        for q in 0..n {
            acc = acc.add(&f(p, q));
        }
    }
    acc
}

pub fn sum3<S: Scalar>(
    proto: &S,
    n: usize,
    mut f: impl FnMut(usize, usize, usize) -> S,
) -> S {
    let mut acc = proto.zero_like();
    for p in 0..n {
        for q in 0..n {
            for r in 0..n {
                acc = acc.add(&f(p, q, r));
            }
        }
    }
    acc
}

pub fn sum4<S: Scalar>(
    proto: &S,
    n: usize,
    mut f: impl FnMut(usize, usize, usize, usize) -> S,
) -> S {
    let mut acc = proto.zero_like();
    for p in 0..n {
        for q in 0..n {
            for r in 0..n {
                for s in 0..n {
                    acc = acc.add(&f(p, q, r, s));
                }
            }
        }
    }
    acc
}

/// Determinant of an `n x n` scalar matrix, `n <= 3`.
pub fn det<S: Scalar>(n: usize, m: &T2<S>) -> S {
    match n {
        1 => m[0][0].clone(),
        2 => m[0][0].mul(&m[1][1]).sub(&m[0][1].mul(&m[1][0])),
        3 => {
            let c0 = m[1][1].mul(&m[2][2]).sub(&m[1][2].mul(&m[2][1]));
            let c1 = m[1][0].mul(&m[2][2]).sub(&m[1][2].mul(&m[2][0]));
            let c2 = m[1][0].mul(&m[2][1]).sub(&m[1][1].mul(&m[2][0]));
            m[0][0]
                .mul(&c0)
                .sub(&m[0][1].mul(&c1))
                .add(&m[0][2].mul(&c2))
        }
        _ => panic!("det: unsupported dimension {}", n),
    }
}

/// Inverse via the adjugate, `n <= 3`. Returns `(inverse, determinant)`.
/// The caller is responsible for checking the determinant first.
pub fn inverse<S: Scalar>(n: usize, m: &T2<S>) -> (T2<S>, S) {
    let d = det(n, m);
    let dinv = d.recip();
    let inv = match n {
        1 => t2(1, |_, _| dinv.clone()),
        2 => {
            let mut out = t2(2, |_, _| m[0][0].zero_like());
            out[0][0] = m[1][1].mul(&dinv);
            out[1][1] = m[0][0].mul(&dinv);
            out[0][1] = m[0][1].neg().mul(&dinv);
            out[1][0] = m[1][0].neg().mul(&dinv);
            out
        }
        3 => t2(3, |i, j| {
            // adjugate: cofactor of (j, i)
            let rows: Vec<usize> = (0..3).filter(|&k| k != j).collect();
            let cols: Vec<usize> = (0..3).filter(|&k| k != i).collect();
            let minor = m[rows[0]][cols[0]]
                .mul(&m[rows[1]][cols[1]])
                .sub(&m[rows[0]][cols[1]].mul(&m[rows[1]][cols[0]]));
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            minor.scale(sign).mul(&dinv)
        }),
        _ => panic!("inverse: unsupported dimension {}", n),
    };
    (inv, d)
}

// ---------------------------------------------------------------------------
// f64 dense helpers (for extracted point values)
// ---------------------------------------------------------------------------

pub fn det_f64(m: &[Vec<f64>]) -> f64 {
    match m.len() {
        1 => m[0][0],
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        3 => {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        }
        _ => panic!("det_f64: unsupported dimension"),
    }
}

pub fn inverse_f64(m: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = m.len();
    let d = det_f64(m);
    if d.abs() < 1e-300 {
        return None;
    }
    let out = match n {
        1 => vec![vec![1.0 / d]],
        2 => vec![
            vec![m[1][1] / d, -m[0][1] / d],
            vec![-m[1][0] / d, m[0][0] / d],
        ],
        3 => (0..3)
            .map(|i| {
                (0..3)
                    .map(|j| {
                        let rows: Vec<usize> = (0..3).filter(|&k| k != j).collect();
                        let cols: Vec<usize> = (0..3).filter(|&k| k != i).collect();
                        let minor = m[rows[0]][cols[0]] * m[rows[1]][cols[1]]
                            - m[rows[0]][cols[1]] * m[rows[1]][cols[0]];
                        let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                        sign * minor / d
                    })
                    .collect()
            })
            .collect(),
        _ => panic!("inverse_f64: unsupported dimension"),
    };
    Some(out)
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn sym_eigenvalues(m: &[Vec<f64>]) -> Vec<f64> {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m.to_vec();
    for _ in 0..64 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[i][j] * a[i][j];
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = 0.5 * (a[q][q] - a[p][p]) / a[p][q];
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    eig.sort_by(|x, y| x.partial_cmp(y).unwrap());
    eig
}

pub fn min_eigenvalue(m: &[Vec<f64>]) -> f64 {
    sym_eigenvalues(m)[0]
}

/// Solves `A x = b` for symmetric positive-definite `A` (n <= 3) by
/// unpivoted Cholesky; returns `None` when a pivot degenerates.
pub fn solve_spd(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if s <= 1e-14 {
                    return None;
                }
                l[i][j] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i][k] * y[k];
        }
        y[i] = s / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[k][i] * x[k];
        }
        x[i] = s / l[i][i];
    }
    Some(x)
}

/// Least-squares slope of `y` against `x` (both small vectors).
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        num += (xi - mx) * (yi - my);
        den += (xi - mx) * (xi - mx);
    }
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taylor::{space, Jet};

    #[test]
    fn jet_matrix_inverse_roundtrips() {
        let sp = space(3, 4);
        let x = Jet::variable(sp, 1, 0.3);
        let y = Jet::variable(sp, 2, -0.5);
        let one = Jet::constant(sp, 1.0);
        let m: T2<Jet> = vec![
            vec![(&x * &x).add_f64(2.0), &x * &y, x.clone()],
            vec![&x * &y, (&y * &y).add_f64(3.0), y.scale(0.5)],
            vec![x.clone(), y.scale(0.5), one.clone()],
        ];
        let (inv, d) = inverse(3, &m);
        assert!(d.value() > 0.0);
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = Jet::constant(sp, 0.0);
                for k in 0..3 {
                    acc = &acc + &(&m[i][k] * &inv[k][j]);
                }
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((acc.value() - want).abs() < 1e-12);
                // identity is constant: all derivative slots vanish
                assert!(acc.partial(&[0, 1, 0]).abs() < 1e-10);
                assert!(acc.partial(&[0, 1, 1]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn jacobi_eigenvalues_match_characteristic_roots() {
        let m = vec![
            vec![2.0, 1.0, 0.0],
            vec![1.0, 3.0, -1.0],
            vec![0.0, -1.0, 1.0],
        ];
        let eig = sym_eigenvalues(&m);
        // verify against the characteristic polynomial directly
        for &l in &eig {
            let shifted: Vec<Vec<f64>> = (0..3)
                .map(|i| {
                    (0..3)
                        .map(|j| m[i][j] - if i == j { l } else { 0.0 })
                        .collect()
                })
                .collect();
            assert!(det_f64(&shifted).abs() < 1e-9);
        }
        assert_eq!(eig.len(), 3);
        assert!(eig[0] <= eig[1] && eig[1] <= eig[2]);
    }

    #[test]
    fn spd_solve_and_slope() {
        let a = vec![vec![4.0, 1.0], vec![1.0, 3.0]];
        let x = solve_spd(&a, &[1.0, 2.0]).unwrap();
        assert!((4.0 * x[0] + x[1] - 1.0).abs() < 1e-12);
        assert!((x[0] + 3.0 * x[1] - 2.0).abs() < 1e-12);
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [2.1, 4.1, 6.1, 8.1];
        assert!((ls_slope(&xs, &ys) - 2.0).abs() < 1e-12);
    }
}
