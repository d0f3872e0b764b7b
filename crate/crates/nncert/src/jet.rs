//! Forward-mode second-order jets with runtime nesting.
//!
//! [`Num`] is either a plain value or a jet (value, gradient, packed
//! symmetric Hessian) whose coefficients are again `Num`s. Nesting jets
//! yields exact outer derivatives of inner partial derivatives: this is
//! how quadrature and chart-inverse nodes obtain exact derivatives of
//! integrands and inverse maps without finite differencing. Plain values
//! act as constants of any shape, so mixed-depth arithmetic needs no
//! explicit lifting.

use crate::error::{Error, Result};

/// Scalar abstraction shared by `f64` and [`Num`]; lets the linear
/// algebra helpers below run over either.
pub trait Real: Clone + std::fmt::Debug {
    fn lift(c: f64) -> Self;
    /// The underlying value part (recursively for jets).
    fn val(&self) -> f64;

    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn neg(&self) -> Self;
    fn div(&self, o: &Self) -> Result<Self>;

    fn powi(&self, k: u32) -> Self;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn exp(&self) -> Self;
    fn log(&self) -> Result<Self>;
    fn sqrt(&self) -> Result<Self>;

    /// `max(0, x)^p`, branch decided on the value part. `p >= 1`.
    fn ramp(&self, p: u32) -> Self;

    fn scale(&self, c: f64) -> Self {
        self.mul(&Self::lift(c))
    }
}

impl Real for f64 {
    fn lift(c: f64) -> Self {
        c
    }
    fn val(&self) -> f64 {
        *self
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
    fn div(&self, o: &Self) -> Result<Self> {
        if *o == 0.0 || !o.is_finite() {
            return Err(Error::domain(format!("division by {o}")));
        }
        Ok(self / o)
    }
    fn powi(&self, k: u32) -> Self {
        f64::powi(*self, k as i32)
    }
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn log(&self) -> Result<Self> {
        if *self <= 0.0 {
            return Err(Error::domain(format!("log of non-positive value {self}")));
        }
        Ok(f64::ln(*self))
    }
    fn sqrt(&self) -> Result<Self> {
        if *self <= 0.0 {
            return Err(Error::domain(format!("sqrt of non-positive value {self}")));
        }
        Ok(f64::sqrt(*self))
    }
    fn ramp(&self, p: u32) -> Self {
        if *self <= 0.0 {
            0.0
        } else {
            f64::powi(*self, p as i32)
        }
    }
}

/// Packed index of the symmetric entry (i, j); requires `i >= j`.
#[inline]
pub fn sym_index(i: usize, j: usize) -> usize {
    debug_assert!(i >= j);
    i * (i + 1) / 2 + j
}

/// A second-order jet: value, gradient and packed lower-triangular
/// Hessian over `g.len()` directions, coefficients again [`Num`].
#[derive(Clone, Debug)]
pub struct JetNum {
    pub v: Num,
    pub g: Vec<Num>,
    /// Packed lower-triangular row-major, length `dim*(dim+1)/2`.
    pub h: Vec<Num>,
}

impl JetNum {
    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn hess(&self, i: usize, j: usize) -> &Num {
        if i >= j {
            &self.h[sym_index(i, j)]
        } else {
            &self.h[sym_index(j, i)]
        }
    }

    /// Chain rule for a unary function with `f0 = f(v)`, `f1 = f'(v)`,
    /// `f2 = f''(v)` already evaluated at the value part.
    fn chain(&self, f0: Num, f1: Num, f2: Num) -> Num {
        let g: Vec<Num> = self.g.iter().map(|gi| f1.mul(gi)).collect();
        let mut h = Vec::with_capacity(self.h.len());
        for i in 0..self.dim() {
            for j in 0..=i {
                h.push(
                    f1.mul(&self.h[sym_index(i, j)])
                        .add(&f2.mul(&self.g[i]).mul(&self.g[j])),
                );
            }
        }
        Num::Jet(Box::new(JetNum { v: f0, g, h }))
    }
}

/// Runtime-nested scalar: a plain value or a jet with `Num` coefficients.
#[derive(Clone, Debug)]
pub enum Num {
    Re(f64),
    Jet(Box<JetNum>),
}

impl Num {
    pub fn constant(c: f64) -> Num {
        Num::Re(c)
    }

    /// Jet seed for the `index`-th of `dim` directions around `v`.
    pub fn jet_variable(dim: usize, index: usize, v: Num) -> Num {
        let mut g = vec![Num::Re(0.0); dim];
        g[index] = Num::Re(1.0);
        Num::Jet(Box::new(JetNum {
            v,
            g,
            h: vec![Num::Re(0.0); dim * (dim + 1) / 2],
        }))
    }

    pub fn as_jet(&self) -> Result<&JetNum> {
        match self {
            Num::Jet(j) => Ok(j),
            Num::Re(_) => Err(Error::Invalid("expected a jet, found a plain value".into())),
        }
    }

    fn unary(
        &self,
        f: impl Fn(f64) -> f64,
        derivs: impl Fn(&Num) -> (Num, Num, Num),
    ) -> Num {
        match self {
            Num::Re(v) => Num::Re(f(*v)),
            Num::Jet(j) => {
                let (f0, f1, f2) = derivs(&j.v);
                j.chain(f0, f1, f2)
            }
        }
    }

    fn try_unary(
        &self,
        f: impl Fn(f64) -> Result<f64>,
        derivs: impl Fn(&Num) -> Result<(Num, Num, Num)>,
    ) -> Result<Num> {
        match self {
            Num::Re(v) => Ok(Num::Re(f(*v)?)),
            Num::Jet(j) => {
                let (f0, f1, f2) = derivs(&j.v)?;
                Ok(j.chain(f0, f1, f2))
            }
        }
    }
}

impl Real for Num {
    fn lift(c: f64) -> Self {
        Num::Re(c)
    }

    fn val(&self) -> f64 {
        match self {
            Num::Re(v) => *v,
            Num::Jet(j) => j.v.val(),
        }
    }

    fn add(&self, o: &Self) -> Self {
        match (self, o) {
            (Num::Re(a), Num::Re(b)) => Num::Re(a + b),
            (Num::Jet(a), Num::Jet(b)) => {
                debug_assert_eq!(a.dim(), b.dim());
                Num::Jet(Box::new(JetNum {
                    v: a.v.add(&b.v),
                    g: a.g.iter().zip(&b.g).map(|(x, y)| x.add(y)).collect(),
                    h: a.h.iter().zip(&b.h).map(|(x, y)| x.add(y)).collect(),
                }))
            }
            (Num::Re(_), Num::Jet(b)) => Num::Jet(Box::new(JetNum {
                v: self.add(&b.v),
                g: b.g.clone(),
                h: b.h.clone(),
            })),
            (Num::Jet(a), Num::Re(_)) => Num::Jet(Box::new(JetNum {
                v: a.v.add(o),
                g: a.g.clone(),
                h: a.h.clone(),
            })),
        }
    }

    fn sub(&self, o: &Self) -> Self {
        self.add(&o.neg())
    }

    fn mul(&self, o: &Self) -> Self {
        match (self, o) {
            (Num::Re(a), Num::Re(b)) => Num::Re(a * b),
            (Num::Jet(a), Num::Jet(b)) => {
                debug_assert_eq!(a.dim(), b.dim());
                let dim = a.dim();
                let v = a.v.mul(&b.v);
                let g: Vec<Num> = (0..dim)
                    .map(|i| a.g[i].mul(&b.v).add(&a.v.mul(&b.g[i])))
                    .collect();
                let mut h = Vec::with_capacity(a.h.len());
                for i in 0..dim {
                    for j in 0..=i {
                        let idx = sym_index(i, j);
                        h.push(
                            a.h[idx]
                                .mul(&b.v)
                                .add(&a.v.mul(&b.h[idx]))
                                .add(&a.g[i].mul(&b.g[j]))
                                .add(&a.g[j].mul(&b.g[i])),
                        );
                    }
                }
                Num::Jet(Box::new(JetNum { v, g, h }))
            }
            // a plain value is a constant of any jet shape
            (Num::Re(c), Num::Jet(b)) => Num::Jet(Box::new(JetNum {
                v: self.mul(&b.v),
                g: b.g.iter().map(|x| x.scale(*c)).collect(),
                h: b.h.iter().map(|x| x.scale(*c)).collect(),
            })),
            (Num::Jet(_), Num::Re(_)) => o.mul(self),
        }
    }

    fn neg(&self) -> Self {
        match self {
            Num::Re(v) => Num::Re(-v),
            Num::Jet(j) => Num::Jet(Box::new(JetNum {
                v: j.v.neg(),
                g: j.g.iter().map(|x| x.neg()).collect(),
                h: j.h.iter().map(|x| x.neg()).collect(),
            })),
        }
    }

    fn div(&self, o: &Self) -> Result<Self> {
        match o {
            Num::Re(b) => {
                if *b == 0.0 || !b.is_finite() {
                    return Err(Error::domain(format!("division by {b}")));
                }
                Ok(self.scale(1.0 / b))
            }
            Num::Jet(_) => {
                // self * (1/o) with 1/o by the unary chain rule
                let recip = o.try_unary(
                    |v| {
                        if v == 0.0 || !v.is_finite() {
                            Err(Error::domain(format!("division by {v}")))
                        } else {
                            Ok(1.0 / v)
                        }
                    },
                    |v| {
                        let inv = Num::Re(1.0).div(v)?;
                        let inv2 = inv.mul(&inv);
                        Ok((inv.clone(), inv2.neg(), inv2.mul(&inv).scale(2.0)))
                    },
                )?;
                Ok(self.mul(&recip))
            }
        }
    }

    fn powi(&self, k: u32) -> Self {
        match k {
            0 => Num::Re(1.0),
            1 => self.clone(),
            _ => {
                let kf = k as f64;
                self.unary(
                    |v| v.powi(k as i32),
                    |v| {
                        (
                            v.powi(k),
                            v.powi(k - 1).scale(kf),
                            v.powi(k - 2).scale(kf * (kf - 1.0)),
                        )
                    },
                )
            }
        }
    }

    fn sin(&self) -> Self {
        self.unary(f64::sin, |v| (v.sin(), v.cos(), v.sin().neg()))
    }

    fn cos(&self) -> Self {
        self.unary(f64::cos, |v| (v.cos(), v.sin().neg(), v.cos().neg()))
    }

    fn exp(&self) -> Self {
        self.unary(f64::exp, |v| {
            let e = v.exp();
            (e.clone(), e.clone(), e)
        })
    }

    fn log(&self) -> Result<Self> {
        self.try_unary(|v| Real::log(&v), |v| {
            let f0 = v.log()?;
            let f1 = Num::Re(1.0).div(v)?;
            Ok((f0, f1.clone(), f1.mul(&f1).neg()))
        })
    }

    fn sqrt(&self) -> Result<Self> {
        self.try_unary(|v| Real::sqrt(&v), |v| {
            let r = v.sqrt()?;
            let f1 = Num::Re(0.5).div(&r)?;
            let f2 = Num::Re(-0.25).div(&r.mul(&r).mul(&r))?;
            Ok((r, f1, f2))
        })
    }

    fn ramp(&self, p: u32) -> Self {
        if self.val() <= 0.0 {
            Num::Re(0.0)
        } else {
            self.powi(p)
        }
    }
}

/// Value, gradient and full symmetric Hessian of a scalar function at a
/// point. The public face of all derivative computations.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Jet2 {
    pub value: f64,
    pub gradient: Vec<f64>,
    /// Row-major `n x n` symmetric matrix.
    pub hessian: Vec<f64>,
}

impl Jet2 {
    pub fn dim(&self) -> usize {
        self.gradient.len()
    }

    pub fn hess(&self, i: usize, j: usize) -> f64 {
        self.hessian[i * self.dim() + j]
    }
}

impl Jet2 {
    /// Collapse a depth-one jet (plain-value coefficients) into a `Jet2`.
    pub fn from_num(num: &Num) -> Result<Jet2> {
        let j = num.as_jet()?;
        let n = j.dim();
        let mut hessian = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                hessian[i * n + k] = j.hess(i, k).val();
            }
        }
        Ok(Jet2 {
            value: j.v.val(),
            gradient: j.g.iter().map(|x| x.val()).collect(),
            hessian,
        })
    }
}

/// Solve `A x = b` by Gaussian elimination with partial pivoting on the
/// value parts. Works over plain values and nested jets alike.
pub fn solve_linear<T: Real>(a: &[Vec<T>], b: &[T]) -> Result<Vec<T>> {
    let n = b.len();
    let mut m: Vec<Vec<T>> = a.to_vec();
    let mut rhs: Vec<T> = b.to_vec();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| {
                m[i][col]
                    .val()
                    .abs()
                    .partial_cmp(&m[j][col].val().abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap();
        if m[pivot][col].val().abs() == 0.0 {
            return Err(Error::domain("singular linear system"));
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..n {
            let factor = m[row][col].div(&m[col][col])?;
            for k in col..n {
                let t = m[col][k].mul(&factor);
                m[row][k] = m[row][k].sub(&t);
            }
            let t = rhs[col].mul(&factor);
            rhs[row] = rhs[row].sub(&t);
        }
    }
    let mut x = vec![T::lift(0.0); n];
    for row in (0..n).rev() {
        let mut acc = rhs[row].clone();
        for k in row + 1..n {
            acc = acc.sub(&m[row][k].mul(&x[k]));
        }
        x[row] = acc.div(&m[row][row])?;
    }
    Ok(x)
}

/// Lower Cholesky factor of a packed symmetric matrix (`sym_index`
/// layout). Fails if a pivot's value part is not strictly positive.
pub fn cholesky_lower<T: Real>(h: &[T], d: usize) -> Result<Vec<T>> {
    let mut l = vec![T::lift(0.0); h.len()];
    for i in 0..d {
        for j in 0..=i {
            let mut acc = h[sym_index(i, j)].clone();
            for k in 0..j {
                acc = acc.sub(&l[sym_index(i, k)].mul(&l[sym_index(j, k)]));
            }
            if i == j {
                if acc.val() <= 0.0 {
                    return Err(Error::domain(format!(
                        "matrix not positive definite (pivot {} = {:.3e})",
                        i,
                        acc.val()
                    )));
                }
                l[sym_index(i, i)] = acc.sqrt()?;
            } else {
                l[sym_index(i, j)] = acc.div(&l[sym_index(j, j)])?;
            }
        }
    }
    Ok(l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn var(dim: usize, i: usize, v: f64) -> Num {
        Num::jet_variable(dim, i, Num::Re(v))
    }

    #[test]
    fn product_rule() {
        // f = x*y at (1, 2): grad (2, 1), hess [[0,1],[1,0]]
        let f = var(2, 0, 1.0).mul(&var(2, 1, 2.0));
        let j = Jet2::from_num(&f).unwrap();
        assert_eq!(j.value, 2.0);
        assert_eq!(j.gradient, vec![2.0, 1.0]);
        assert_eq!(j.hess(0, 1), 1.0);
        assert_eq!(j.hess(0, 0), 0.0);
    }

    #[test]
    fn transcendental_chain() {
        // f = sin(x)*exp(y)
        let (a, b) = (0.3, 0.1);
        let f = var(2, 0, a).sin().mul(&var(2, 1, b).exp());
        let j = Jet2::from_num(&f).unwrap();
        assert_abs_diff_eq!(j.value, a.sin() * b.exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(j.gradient[0], a.cos() * b.exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(j.gradient[1], a.sin() * b.exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(j.hess(0, 0), -a.sin() * b.exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(j.hess(0, 1), a.cos() * b.exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(j.hess(1, 1), a.sin() * b.exp(), epsilon = 1e-15);
    }

    #[test]
    fn division_and_log() {
        // f = log(x)/x at x = 2
        let x = var(1, 0, 2.0);
        let f = x.log().unwrap().div(&x).unwrap();
        let j = Jet2::from_num(&f).unwrap();
        let v: f64 = 2.0;
        assert_abs_diff_eq!(j.value, v.ln() / v, epsilon = 1e-15);
        assert_abs_diff_eq!(j.gradient[0], (1.0 - v.ln()) / (v * v), epsilon = 1e-15);
        assert_abs_diff_eq!(
            j.hess(0, 0),
            (2.0 * v.ln() - 3.0) / (v * v * v),
            epsilon = 1e-15
        );
    }

    #[test]
    fn nested_jet_gives_third_order_information() {
        // Inner expansion of sin around u = x, where x is itself an outer
        // jet variable: the inner gradient coefficient is cos(x) carried
        // as an exact outer jet, so its outer Hessian is -cos(x).
        let x0 = 0.7_f64;
        let outer = var(1, 0, x0);
        let inner = Num::jet_variable(1, 0, outer);
        let s = inner.sin();
        let dsin = Jet2::from_num(&s.as_jet().unwrap().g[0]).unwrap();
        assert_abs_diff_eq!(dsin.value, x0.cos(), epsilon = 1e-15);
        assert_abs_diff_eq!(dsin.gradient[0], -x0.sin(), epsilon = 1e-15);
        assert_abs_diff_eq!(dsin.hess(0, 0), -x0.cos(), epsilon = 1e-15);
    }

    #[test]
    fn domain_errors() {
        let x = var(1, 0, -1.0);
        assert!(x.sqrt().is_err());
        assert!(x.log().is_err());
        let zero = Num::Re(0.0);
        assert!(x.div(&zero).is_err());
    }

    #[test]
    fn ramp_branches() {
        let x = var(1, 0, 0.5);
        let j = Jet2::from_num(&x.ramp(3)).unwrap();
        assert_abs_diff_eq!(j.value, 0.125, epsilon = 1e-15);
        assert_abs_diff_eq!(j.gradient[0], 0.75, epsilon = 1e-15);
        let x = var(1, 0, -0.5);
        assert_eq!(x.ramp(3).val(), 0.0);
    }

    #[test]
    fn generic_solve_and_cholesky() {
        let a = vec![vec![4.0, 1.0], vec![1.0, 3.0]];
        let b = vec![1.0, 2.0];
        let x = solve_linear(&a, &b).unwrap();
        assert_abs_diff_eq!(4.0 * x[0] + x[1], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(x[0] + 3.0 * x[1], 2.0, epsilon = 1e-14);

        // H = [[4,1],[1,3]], packed lower
        let h = vec![4.0, 1.0, 3.0];
        let l = cholesky_lower(&h, 2).unwrap();
        assert_abs_diff_eq!(l[0] * l[0], 4.0, epsilon = 1e-14);
        assert_abs_diff_eq!(l[1] * l[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(l[1] * l[1] + l[2] * l[2], 3.0, epsilon = 1e-14);
    }
}
