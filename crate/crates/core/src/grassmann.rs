//! Subspaces of ℝⁿ with orthonormal frames, the sine-of-angle distances
//! between them, graphs of linear maps, and tangent spaces of charts.

use nalgebra::{DMatrix, DVector};

use crate::error::{GeomError, Result};

const RANK_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct Subspace {
    frame: DMatrix<f64>,
}

impl Subspace {
    pub fn zero(n: usize) -> Self {
        Subspace {
            frame: DMatrix::zeros(n, 0),
        }
    }

    pub fn full(n: usize) -> Self {
        Subspace {
            frame: DMatrix::identity(n, n),
        }
    }

    /// Column span of `m`, orthonormalised. Columns below the relative rank
    /// tolerance are discarded.
    pub fn span(m: &DMatrix<f64>) -> Self {
        let n = m.nrows();
        if m.ncols() == 0 {
            return Subspace::zero(n);
        }
        let scale = m.amax();
        if scale == 0.0 {
            return Subspace::zero(n);
        }
        let svd = m.clone().svd(true, false);
        let u = svd.u.expect("u requested");
        let keep: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&i| svd.singular_values[i] > RANK_TOL * scale)
            .collect();
        let mut frame = DMatrix::zeros(n, keep.len());
        for (j, &i) in keep.iter().enumerate() {
            frame.set_column(j, &u.column(i));
        }
        Subspace { frame }
    }

    pub fn from_vectors(vs: &[Vec<f64>], n: usize) -> Self {
        let mut m = DMatrix::zeros(n, vs.len());
        for (j, v) in vs.iter().enumerate() {
            for i in 0..n {
                m[(i, j)] = v[i];
            }
        }
        Subspace::span(&m)
    }

    pub fn line(v: &[f64]) -> Self {
        Subspace::from_vectors(&[v.to_vec()], v.len())
    }

    pub fn frame(&self) -> &DMatrix<f64> {
        &self.frame
    }

    pub fn ambient(&self) -> usize {
        self.frame.nrows()
    }

    pub fn dim(&self) -> usize {
        self.frame.ncols()
    }

    /// Orthogonal projection of `v` onto the subspace.
    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.frame * (self.frame.transpose() * v)
    }

    /// `V × ℝ` inside ℝⁿ⁺¹.
    pub fn times_line(&self) -> Subspace {
        let n = self.ambient();
        let k = self.dim();
        let mut f = DMatrix::zeros(n + 1, k + 1);
        f.view_mut((0, 0), (n, k)).copy_from(&self.frame);
        f[(n, k)] = 1.0;
        Subspace { frame: f }
    }

    /// `V × {0}` inside ℝⁿ⁺¹.
    pub fn times_point(&self) -> Subspace {
        let n = self.ambient();
        let mut f = DMatrix::zeros(n + 1, self.dim());
        f.view_mut((0, 0), (n, self.dim())).copy_from(&self.frame);
        Subspace { frame: f }
    }

    /// Orthogonal complement.
    pub fn complement(&self) -> Subspace {
        let n = self.ambient();
        let p = DMatrix::identity(n, n) - &self.frame * self.frame.transpose();
        Subspace::span(&p)
    }

    pub fn orthonormality_defect(&self) -> f64 {
        let k = self.dim();
        (self.frame.transpose() * &self.frame - DMatrix::identity(k, k)).amax()
    }
}

/// `d(v, W)`: sine of the angle between the unit vector `v` and `W`.
pub fn dist_vec_subspace(v: &[f64], w: &Subspace) -> Result<f64> {
    if v.len() != w.ambient() {
        return Err(GeomError::Input("ambient dimension mismatch".into()));
    }
    let dv = DVector::from_column_slice(v);
    let norm = dv.norm();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(GeomError::Input(format!("vector is not unit (|v| = {norm})")));
    }
    if w.dim() == 0 {
        return Ok(1.0);
    }
    Ok((&dv - w.project(&dv)).norm().min(1.0))
}

/// `d(P, Q)`: sup over unit vectors of `P` of their distance to `Q`.
pub fn dist_subspace(p: &Subspace, q: &Subspace) -> Result<f64> {
    if p.ambient() != q.ambient() {
        return Err(GeomError::Input("ambient dimension mismatch".into()));
    }
    if p.dim() == 0 {
        return Ok(0.0);
    }
    let residual = p.frame() - q.frame() * (q.frame().transpose() * p.frame());
    let s = residual.singular_values();
    Ok(s.max().clamp(0.0, 1.0))
}

/// Chordal metric on lines: `min(|u - w|, |u + w|)`.
pub fn dtilde(l1: &Subspace, l2: &Subspace) -> Result<f64> {
    if l1.dim() != 1 || l2.dim() != 1 {
        return Err(GeomError::Input("dtilde needs two lines".into()));
    }
    if l1.ambient() != l2.ambient() {
        return Err(GeomError::Input("ambient dimension mismatch".into()));
    }
    let u = l1.frame().column(0);
    let w = l2.frame().column(0);
    Ok((u - w).norm().min((u + w).norm()))
}

/// A linear map `l: E → E^⊥`, stored as an `n × k` matrix sending frame
/// coordinates of `E` to vectors in ℝⁿ.
#[derive(Clone, Debug)]
pub struct LinearMap {
    pub domain: Subspace,
    pub matrix: DMatrix<f64>,
}

impl LinearMap {
    /// Builds the map, projecting the images onto `E^⊥`.
    pub fn new(domain: Subspace, matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != domain.ambient() || matrix.ncols() != domain.dim() {
            return Err(GeomError::Input("matrix shape does not match the domain".into()));
        }
        let f = domain.frame();
        let proj = &matrix - f * (f.transpose() * &matrix);
        Ok(LinearMap {
            domain,
            matrix: proj,
        })
    }

    pub fn zero(domain: Subspace) -> Self {
        let (n, k) = (domain.ambient(), domain.dim());
        LinearMap {
            domain,
            matrix: DMatrix::zeros(n, k),
        }
    }

    pub fn operator_norm(&self) -> f64 {
        if self.matrix.ncols() == 0 {
            return 0.0;
        }
        self.matrix.singular_values().max()
    }

    /// `l - m` for maps on the same domain frame.
    pub fn sub(&self, other: &LinearMap) -> LinearMap {
        LinearMap {
            domain: self.domain.clone(),
            matrix: &self.matrix - &other.matrix,
        }
    }
}

/// `{v + l(v) : v ∈ E}`.
pub fn graph_of_linear_map(l: &LinearMap) -> Subspace {
    Subspace::span(&(l.domain.frame() + &l.matrix))
}

/// A parametrised stratum: a map from an open parameter domain in ℝᵏ.
pub trait Chart {
    fn param_dim(&self) -> usize;
    fn ambient(&self) -> usize;
    fn eval(&self, u: &[f64]) -> Vec<f64>;
    fn jacobian(&self, u: &[f64]) -> DMatrix<f64>;
}

/// Column span of the chart Jacobian at `u`.
pub fn tangent_space(chart: &dyn Chart, u: &[f64]) -> Result<Subspace> {
    let j = chart.jacobian(u);
    let t = Subspace::span(&j);
    if t.dim() < chart.param_dim() {
        return Err(GeomError::DegenerateChart {
            rank: t.dim(),
            expected: chart.param_dim(),
        });
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

    struct Parabola;
    impl Chart for Parabola {
        fn param_dim(&self) -> usize {
            1
        }
        fn ambient(&self) -> usize {
            2
        }
        fn eval(&self, u: &[f64]) -> Vec<f64> {
            vec![u[0], u[0] * u[0]]
        }
        fn jacobian(&self, u: &[f64]) -> DMatrix<f64> {
            DMatrix::from_column_slice(2, 1, &[1.0, 2.0 * u[0]])
        }
    }

    struct Pinch;
    impl Chart for Pinch {
        fn param_dim(&self) -> usize {
            1
        }
        fn ambient(&self) -> usize {
            2
        }
        fn eval(&self, u: &[f64]) -> Vec<f64> {
            vec![u[0].powi(3), u[0].powi(2)]
        }
        fn jacobian(&self, u: &[f64]) -> DMatrix<f64> {
            DMatrix::from_column_slice(2, 1, &[3.0 * u[0] * u[0], 2.0 * u[0]])
        }
    }

    #[test]
    fn vec_distance_examples() {
        let e1 = Subspace::line(&[1.0, 0.0]);
        assert!((dist_vec_subspace(&[0.0, 1.0], &e1).unwrap() - 1.0).abs() < 1e-15);
        assert!(dist_vec_subspace(&[1.0, 0.0], &e1).unwrap() < 1e-15);
        let v = [FRAC_1_SQRT_2, FRAC_1_SQRT_2];
        assert!((dist_vec_subspace(&v, &e1).unwrap() - SQRT_2 / 2.0).abs() < 1e-12);
        assert_eq!(dist_vec_subspace(&[1.0, 0.0], &Subspace::zero(2)).unwrap(), 1.0);
        assert!(dist_vec_subspace(&[2.0, 0.0], &e1).is_err());
    }

    #[test]
    fn subspace_distance_examples() {
        let e1 = Subspace::line(&[1.0, 0.0]);
        let e2 = Subspace::line(&[0.0, 1.0]);
        assert!(dist_subspace(&e1, &e1).unwrap() < 1e-15);
        assert!((dist_subspace(&e1, &e2).unwrap() - 1.0).abs() < 1e-15);
        let lhs = dist_subspace(&e1.times_line(), &e2.times_line()).unwrap();
        assert!((lhs - 1.0).abs() < 1e-12);
        assert_eq!(dist_subspace(&Subspace::zero(2), &e1).unwrap(), 0.0);
        assert!(dist_subspace(&e1, &Subspace::zero(3)).is_err());
    }

    #[test]
    fn dtilde_examples() {
        let a = Subspace::line(&[1.0, 0.0]);
        let b = Subspace::line(&[(PI / 3.0).cos(), (PI / 3.0).sin()]);
        let c = Subspace::line(&[0.0, 1.0]);
        assert!(dtilde(&a, &a).unwrap() < 1e-15);
        assert!((dtilde(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        assert!((dtilde(&a, &c).unwrap() - SQRT_2).abs() < 1e-12);
        assert!(dtilde(&a, &Subspace::full(2)).is_err());
    }

    #[test]
    fn graph_examples() {
        let e = Subspace::line(&[1.0, 0.0]);
        let zero = LinearMap::zero(e.clone());
        assert!(dist_subspace(&graph_of_linear_map(&zero), &e).unwrap() < 1e-15);
        let l = LinearMap::new(e.clone(), DMatrix::from_column_slice(2, 1, &[0.0, 1.0])).unwrap();
        let g = graph_of_linear_map(&l);
        let d = dist_subspace(&e, &g).unwrap();
        assert!((d - SQRT_2 / 2.0).abs() < 1e-12);
        assert!(d <= 2.0 * l.operator_norm());
        assert!(dist_subspace(&graph_of_linear_map(&l), &graph_of_linear_map(&l)).unwrap() < 1e-15);
    }

    #[test]
    fn tangent_examples() {
        let t0 = tangent_space(&Parabola, &[0.0]).unwrap();
        assert!(dist_subspace(&t0, &Subspace::line(&[1.0, 0.0])).unwrap() < 1e-15);
        let t1 = tangent_space(&Parabola, &[1.0]).unwrap();
        let expect = Subspace::line(&[1.0 / 5f64.sqrt(), 2.0 / 5f64.sqrt()]);
        assert!(dist_subspace(&t1, &expect).unwrap() < 1e-12);
        assert!(matches!(
            tangent_space(&Pinch, &[0.0]),
            Err(GeomError::DegenerateChart { .. })
        ));
        assert!(t1.orthonormality_defect() < 1e-10);
    }
}
