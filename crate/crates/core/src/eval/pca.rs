//! PCA projection onto the top two principal axes; a built-in fallback so
//! embedding dumps can be eyeballed without an external projector.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Jacobi eigendecomposition of a symmetric matrix. Returns eigenvalues and
/// the matrix whose columns are the corresponding eigenvectors.
fn jacobi_eigen(mut a: Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let d = a.nrows();
    let mut vecs = Array2::eye(d);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..d {
            for q in p + 1..d {
                off += a[[p, q]] * a[[p, q]];
            }
        }
        let scale: f64 = a.iter().map(|v| v * v).sum();
        if off <= 1e-24 * scale.max(1e-300) {
            break;
        }
        for p in 0..d {
            for q in p + 1..d {
                if a[[p, q]].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * a[[p, q]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..d {
                    let vkp = vecs[[k, p]];
                    let vkq = vecs[[k, q]];
                    vecs[[k, p]] = c * vkp - s * vkq;
                    vecs[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let values = Array1::from_iter((0..d).map(|i| a[[i, i]]));
    (values, vecs)
}

/// Project rows of `vectors` onto the top-2 principal axes of their
/// covariance. Fails when fewer than 3 points are given or the covariance
/// has rank below 2.
pub fn project_2d(vectors: &Array2<f64>) -> Result<Array2<f64>> {
    let (n, d) = vectors.dim();
    if n < 3 {
        return Err(Error::Eval(format!("need at least 3 points, got {n}")));
    }
    if d < 2 {
        return Err(Error::Eval(format!("need at least 2 dimensions, got {d}")));
    }
    let mean = vectors.mean_axis(ndarray::Axis(0)).unwrap();
    let centered = vectors - &mean.broadcast((n, d)).unwrap();
    let cov = centered.t().dot(&centered) / (n as f64 - 1.0);

    let (values, vecs) = jacobi_eigen(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| values[j].partial_cmp(&values[i]).unwrap());
    let (first, second) = (order[0], order[1]);
    let tol = 1e-12 * values[first].abs().max(1.0);
    if values[second] <= tol {
        return Err(Error::Eval(format!(
            "covariance is rank-deficient: second eigenvalue {} (first {})",
            values[second], values[first]
        )));
    }

    let mut axes = Array2::zeros((d, 2));
    for (out_col, &src) in [first, second].iter().enumerate() {
        let col = vecs.column(src);
        // Deterministic sign: largest-magnitude component positive.
        let pivot = col
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        let flip = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for k in 0..d {
            axes[[k, out_col]] = col[k] * flip;
        }
    }
    Ok(centered.dot(&axes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::Rng;

    fn total_variance(m: &Array2<f64>) -> f64 {
        let n = m.nrows() as f64;
        let mean = m.mean_axis(ndarray::Axis(0)).unwrap();
        m.rows()
            .into_iter()
            .map(|r| {
                r.iter()
                    .zip(mean.iter())
                    .map(|(v, mu)| (v - mu) * (v - mu))
                    .sum::<f64>()
            })
            .sum::<f64>()
            / (n - 1.0)
    }

    #[test]
    fn two_d_input_is_a_rotation() {
        let mut rng = crate::rngutil::rng_from(&[50]);
        let x = Array2::from_shape_fn((40, 2), |_| rng.gen_range(-1.0..1.0));
        let y = project_2d(&x).unwrap();
        assert_abs_diff_eq!(total_variance(&x), total_variance(&y), epsilon = 1e-9);
    }

    #[test]
    fn collinear_points_are_degenerate() {
        let x = array![[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]];
        assert!(project_2d(&x).is_err());
    }

    #[test]
    fn too_few_points_is_an_error() {
        let x = array![[0.0, 1.0], [1.0, 0.0]];
        assert!(project_2d(&x).is_err());
    }

    #[test]
    fn projection_never_gains_variance_and_is_deterministic() {
        let mut rng = crate::rngutil::rng_from(&[51]);
        let x = Array2::from_shape_fn((30, 8), |_| rng.gen_range(-2.0..2.0));
        let a = project_2d(&x).unwrap();
        let b = project_2d(&x).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dim(), (30, 2));
        assert!(total_variance(&a) <= total_variance(&x) + 1e-9);
    }

    #[test]
    fn recovers_a_planted_dominant_axis() {
        // Points spread mostly along one known direction.
        let mut rng = crate::rngutil::rng_from(&[52]);
        let axis = [0.6, 0.8, 0.0];
        let mut x = Array2::zeros((60, 3));
        for mut row in x.rows_mut() {
            let t: f64 = rng.gen_range(-5.0..5.0);
            for k in 0..3 {
                row[k] = axis[k] * t + rng.gen_range(-0.01..0.01);
            }
        }
        let y = project_2d(&x).unwrap();
        // First output column carries nearly all the variance.
        let var0: f64 = y.column(0).iter().map(|v| v * v).sum();
        let var1: f64 = y.column(1).iter().map(|v| v * v).sum();
        assert!(var0 > 100.0 * var1, "var0={var0}, var1={var1}");
    }
}
