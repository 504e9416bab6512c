//! Hormander vector field families with multivariate polynomial coefficients.
//!
//! A family is `m` vector fields `X_j = A^{jk}(x) d/dx^k` on `R^n`. Coefficients are
//! polynomials, so Lie brackets are computed symbolically and the bracket-generating
//! rank is only subject to round-off at the final numeric evaluation.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Relative tolerance for the column-pivoted rank decision.
pub const RANK_TOL: f64 = 1e-8;

/// Multivariate polynomial with unique exponent tuples and no zero coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    dim: usize,
    // sorted by exponent tuple
    terms: Vec<(Vec<u32>, f64)>,
}

impl Polynomial {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            terms: Vec::new(),
        }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        Self::from_terms(dim, [(c, vec![0; dim])]).expect("constant has matching dimension")
    }

    /// The coordinate function `x_k`.
    pub fn coordinate(dim: usize, k: usize) -> Self {
        let mut e = vec![0; dim];
        e[k] = 1;
        Self::from_terms(dim, [(1.0, e)]).expect("coordinate has matching dimension")
    }

    /// Builds a polynomial from `(coefficient, exponents)` pairs, merging repeated
    /// exponent tuples and pruning zeros.
    pub fn from_terms<I>(dim: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, Vec<u32>)>,
    {
        let mut acc: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        for (c, e) in terms {
            if e.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: e.len(),
                });
            }
            if !c.is_finite() {
                return Err(Error::InvalidInput(format!("non-finite coefficient {c}")));
            }
            *acc.entry(e).or_insert(0.0) += c;
        }
        Ok(Self::from_map(dim, acc))
    }

    fn from_map(dim: usize, acc: BTreeMap<Vec<u32>, f64>) -> Self {
        Self {
            dim,
            terms: acc.into_iter().filter(|(_, c)| *c != 0.0).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[(Vec<u32>, f64)] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms
            .iter()
            .map(|(e, _)| e.iter().sum())
            .max()
            .unwrap_or(0)
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        let mut s = 0.0;
        for (e, c) in &self.terms {
            let mut m = *c;
            for (xi, &ei) in x.iter().zip(e) {
                if ei != 0 {
                    m *= xi.powi(ei as i32);
                }
            }
            s += m;
        }
        s
    }

    pub fn derivative(&self, k: usize) -> Self {
        let mut acc = BTreeMap::new();
        for (e, c) in &self.terms {
            if e[k] > 0 {
                let mut d = e.clone();
                d[k] -= 1;
                *acc.entry(d).or_insert(0.0) += c * e[k] as f64;
            }
        }
        Self::from_map(self.dim, acc)
    }

    pub fn scale(&self, s: f64) -> Self {
        let acc = self.terms.iter().map(|(e, c)| (e.clone(), c * s)).collect();
        Self::from_map(self.dim, acc)
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut acc: BTreeMap<Vec<u32>, f64> = self.terms.iter().cloned().collect();
        for (e, c) in &other.terms {
            *acc.entry(e.clone()).or_insert(0.0) += c;
        }
        Self::from_map(self.dim, acc)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut acc = BTreeMap::new();
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let e: Vec<u32> = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                *acc.entry(e).or_insert(0.0) += ca * cb;
            }
        }
        Self::from_map(self.dim, acc)
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (e, c)) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{c}")?;
            for (k, &ek) in e.iter().enumerate() {
                match ek {
                    0 => {}
                    1 => write!(f, "*x{}", k + 1)?,
                    _ => write!(f, "*x{}^{}", k + 1, ek)?,
                }
            }
        }
        Ok(())
    }
}

/// A single polynomial vector field: component `k` is the coefficient of `d/dx^k`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolynomialField {
    components: Vec<Polynomial>,
}

impl PolynomialField {
    pub fn new(components: Vec<Polynomial>) -> Result<Self> {
        let n = components.len();
        if let Some(bad) = components.iter().find(|p| p.dim() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: bad.dim(),
            });
        }
        Ok(Self { components })
    }

    /// The coordinate field `d/dx^k`.
    pub fn coordinate(n: usize, k: usize) -> Self {
        let components = (0..n)
            .map(|i| Polynomial::constant(n, if i == k { 1.0 } else { 0.0 }))
            .collect();
        Self { components }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Polynomial] {
        &self.components
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(Polynomial::is_zero)
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.components.iter().map(|p| p.eval(x)).collect()
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            components: self
                .components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| a.add(b))
                .collect(),
        }
    }

    /// Directional derivative of every component along `self`: `(self . grad) g`.
    fn apply_to(&self, g: &Self) -> Vec<Polynomial> {
        let n = self.dim();
        g.components
            .iter()
            .map(|gk| {
                (0..n).fold(Polynomial::zero(n), |acc, i| {
                    acc.add(&self.components[i].mul(&gk.derivative(i)))
                })
            })
            .collect()
    }
}

/// `[f1, f2]^k = f1^i d_i f2^k - f2^i d_i f1^k`.
pub fn lie_bracket(f1: &PolynomialField, f2: &PolynomialField) -> Result<PolynomialField> {
    if f1.dim() != f2.dim() {
        return Err(Error::DimensionMismatch {
            expected: f1.dim(),
            got: f2.dim(),
        });
    }
    let a = f1.apply_to(f2);
    let b = f2.apply_to(f1);
    Ok(PolynomialField {
        components: a.iter().zip(&b).map(|(x, y)| x.sub(y)).collect(),
    })
}

/// Outcome of a bracket-generating rank test at one point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct RankReport {
    pub rank: usize,
    /// Smallest bracket length achieving full rank, `None` when `max_step` was exceeded.
    pub step: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VectorFieldFamily {
    name: String,
    n: usize,
    fields: Vec<PolynomialField>,
}

impl VectorFieldFamily {
    pub fn new(name: impl Into<String>, fields: Vec<PolynomialField>) -> Result<Self> {
        let n = fields
            .first()
            .map(PolynomialField::dim)
            .ok_or_else(|| Error::InvalidInput("a family needs at least one field".into()))?;
        if let Some(bad) = fields.iter().find(|f| f.dim() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: bad.dim(),
            });
        }
        Ok(Self {
            name: name.into(),
            n,
            fields,
        })
    }

    /// Coordinate fields `d/dx^1, ..., d/dx^n`.
    pub fn euclidean(n: usize) -> Self {
        let fields = (0..n).map(|k| PolynomialField::coordinate(n, k)).collect();
        Self {
            name: format!("euclidean({n})"),
            n,
            fields,
        }
    }

    /// First Heisenberg group on `(x, y, t)`: `X1 = dx - (y/2) dt`, `X2 = dy + (x/2) dt`.
    pub fn heisenberg() -> Self {
        let p = |terms: Vec<(f64, Vec<u32>)>| Polynomial::from_terms(3, terms).unwrap();
        let x1 = PolynomialField {
            components: vec![
                p(vec![(1.0, vec![0, 0, 0])]),
                Polynomial::zero(3),
                p(vec![(-0.5, vec![0, 1, 0])]),
            ],
        };
        let x2 = PolynomialField {
            components: vec![
                Polynomial::zero(3),
                p(vec![(1.0, vec![0, 0, 0])]),
                p(vec![(0.5, vec![1, 0, 0])]),
            ],
        };
        Self {
            name: "heisenberg".into(),
            n: 3,
            fields: vec![x1, x2],
        }
    }

    /// Grushin plane: `X1 = dx`, `X2 = x dy`.
    pub fn grushin() -> Self {
        let x2 = PolynomialField {
            components: vec![Polynomial::zero(2), Polynomial::coordinate(2, 0)],
        };
        Self {
            name: "grushin".into(),
            n: 2,
            fields: vec![PolynomialField::coordinate(2, 0), x2],
        }
    }

    /// Resolves `euclidean(n)`, `euclideanN`, `heisenberg` or `grushin`.
    pub fn builtin(name: &str) -> Result<Self> {
        let s = name.trim().to_ascii_lowercase();
        match s.as_str() {
            "heisenberg" => return Ok(Self::heisenberg()),
            "grushin" => return Ok(Self::grushin()),
            _ => {}
        }
        if let Some(rest) = s.strip_prefix("euclidean") {
            let digits = rest.trim_start_matches('(').trim_end_matches(')').trim();
            let n: usize = digits
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad euclidean dimension in {name:?}")))?;
            if n == 0 {
                return Err(Error::InvalidInput("euclidean dimension must be >= 1".into()));
            }
            return Ok(Self::euclidean(n));
        }
        Err(Error::InvalidInput(format!("unknown built-in family {name:?}")))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Ambient dimension.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of fields.
    pub fn m(&self) -> usize {
        self.fields.len()
    }

    pub fn fields(&self) -> &[PolynomialField] {
        &self.fields
    }

    pub fn field(&self, j: usize) -> &PolynomialField {
        &self.fields[j]
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Writes `A^{jk}(x)` row-major (`m * n` entries) into `out`.
    #[inline]
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        let n = self.n;
        for (j, f) in self.fields.iter().enumerate() {
            for (k, p) in f.components.iter().enumerate() {
                out[j * n + k] = p.eval(x);
            }
        }
    }

    /// The `m x n` coefficient matrix `A(x)`.
    pub fn eval_coefficients(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check_point(x)?;
        Ok(self.fields.iter().map(|f| f.eval(x)).collect())
    }

    /// `a(x) = A(x)^T A(x)`, symmetric positive semidefinite.
    pub fn diffusion_tensor(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        let a = self.eval_coefficients(x)?;
        let n = self.n;
        let mut out = vec![vec![0.0; n]; n];
        for i in 0..n {
            for k in i..n {
                let s: f64 = a.iter().map(|row| row[i] * row[k]).sum();
                out[i][k] = s;
                out[k][i] = s;
            }
        }
        Ok(out)
    }

    /// Iterated left-normed brackets grouped by length: entry `s - 1` holds length `s`.
    pub fn brackets_by_length(&self, max_step: usize) -> Vec<Vec<PolynomialField>> {
        let mut levels: Vec<Vec<PolynomialField>> = vec![self.fields.clone()];
        for _ in 1..max_step {
            let prev = levels.last().unwrap();
            let mut next = Vec::new();
            for x in &self.fields {
                for y in prev {
                    let b = lie_bracket(x, y).expect("family fields share a dimension");
                    if !b.is_zero() && !next.contains(&b) {
                        next.push(b);
                    }
                }
            }
            levels.push(next);
        }
        levels
    }

    /// Rank of the span of fields and brackets up to `max_step` at `x`.
    pub fn hormander_rank(&self, x: &[f64], max_step: usize) -> Result<RankReport> {
        self.check_point(x)?;
        if max_step == 0 {
            return Err(Error::InvalidInput("max_step must be >= 1".into()));
        }
        let levels = self.brackets_by_length(max_step);
        let mut columns: Vec<Vec<f64>> = Vec::new();
        let mut rank = 0;
        for (s, level) in levels.iter().enumerate() {
            columns.extend(level.iter().map(|f| f.eval(x)));
            rank = linalg::column_rank(&columns, RANK_TOL);
            if rank == self.n {
                return Ok(RankReport {
                    rank,
                    step: Some(s + 1),
                });
            }
        }
        Ok(RankReport { rank, step: None })
    }

    /// Adds `sqrt(eps) d/dx^k` for every axis, so the diffusion tensor becomes `a + eps I`.
    pub fn regularized(&self, eps: f64) -> Self {
        let s = eps.sqrt();
        let mut fields = self.fields.clone();
        for k in 0..self.n {
            let mut f = PolynomialField::coordinate(self.n, k);
            f.components[k] = Polynomial::constant(self.n, s);
            fields.push(f);
        }
        Self {
            name: format!("{}+{}I", self.name, eps),
            n: self.n,
            fields,
        }
    }

    pub fn to_file_spec(&self) -> FamilyFileSpec {
        FamilyFileSpec {
            name: self.name.clone(),
            n: self.n,
            m: self.m(),
            fields: self
                .fields
                .iter()
                .map(|f| FieldSpec {
                    coefficients: f
                        .components
                        .iter()
                        .map(|p| p.terms.iter().map(|(e, c)| (*c, e.clone())).collect())
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn from_file_spec(spec: &FamilyFileSpec) -> Result<Self> {
        if spec.fields.len() != spec.m {
            return Err(Error::Parse(format!(
                "family declares m = {} but lists {} fields",
                spec.m,
                spec.fields.len()
            )));
        }
        let fields = spec
            .fields
            .iter()
            .enumerate()
            .map(|(j, f)| {
                if f.coefficients.len() != spec.n {
                    return Err(Error::Parse(format!(
                        "field {j} has {} coefficients, expected n = {}",
                        f.coefficients.len(),
                        spec.n
                    )));
                }
                let comps = f
                    .coefficients
                    .iter()
                    .map(|terms| Polynomial::from_terms(spec.n, terms.iter().cloned()))
                    .collect::<Result<Vec<_>>>()?;
                PolynomialField::new(comps)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(spec.name.clone(), fields)
    }

    /// Parses the structured-text family definition (TOML).
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: FamilyFileSpec = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_file_spec(&spec)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&self.to_file_spec()).expect("family spec serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }
}

/// On-disk family definition: `fields[j].coefficients[k]` lists the terms of `A^{jk}`
/// as `[coefficient, [exponents...]]`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FamilyFileSpec {
    pub name: String,
    pub n: usize,
    pub m: usize,
    pub fields: Vec<FieldSpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub coefficients: Vec<Vec<(f64, Vec<u32>)>>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn naive_eval(p: &Polynomial, x: &[f64]) -> f64 {
        p.terms()
            .iter()
            .map(|(e, c)| {
                c * e
                    .iter()
                    .zip(x)
                    .map(|(&k, xi)| xi.powf(k as f64))
                    .product::<f64>()
            })
            .sum()
    }

    #[test]
    fn coefficient_matrices_of_builtins() {
        let e = VectorFieldFamily::euclidean(2);
        assert_eq!(
            e.eval_coefficients(&[0.3, -7.0]).unwrap(),
            vec![vec![1.0, 0.0], vec![0.0, 1.0]]
        );
        let h = VectorFieldFamily::heisenberg();
        assert_eq!(
            h.eval_coefficients(&[1.0, 2.0, 0.0]).unwrap(),
            vec![vec![1.0, 0.0, -1.0], vec![0.0, 1.0, 0.5]]
        );
        let g = VectorFieldFamily::grushin();
        assert_eq!(
            g.eval_coefficients(&[0.0, 5.0]).unwrap(),
            vec![vec![1.0, 0.0], vec![0.0, 0.0]]
        );
        assert!(matches!(
            h.eval_coefficients(&[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn diffusion_tensors() {
        let h = VectorFieldFamily::heisenberg();
        let a = h.diffusion_tensor(&[1.0, 2.0, 0.0]).unwrap();
        assert_eq!(
            a,
            vec![
                vec![1.0, 0.0, -1.0],
                vec![0.0, 1.0, 0.5],
                vec![-1.0, 0.5, 1.25]
            ]
        );
        let g = VectorFieldFamily::grushin();
        assert_eq!(
            g.diffusion_tensor(&[0.0, 3.0]).unwrap(),
            vec![vec![1.0, 0.0], vec![0.0, 0.0]]
        );
        let e = VectorFieldFamily::euclidean(3);
        assert_eq!(
            e.diffusion_tensor(&[1.0, 1.0, 1.0]).unwrap(),
            vec![
                vec![1.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0]
            ]
        );
    }

    #[test]
    fn brackets_of_builtins() {
        let dx = PolynomialField::coordinate(2, 0);
        let dy = PolynomialField::coordinate(2, 1);
        assert!(lie_bracket(&dx, &dy).unwrap().is_zero());

        let h = VectorFieldFamily::heisenberg();
        let b = lie_bracket(h.field(0), h.field(1)).unwrap();
        assert_eq!(b, PolynomialField::coordinate(3, 2));

        let g = VectorFieldFamily::grushin();
        let b = lie_bracket(g.field(0), g.field(1)).unwrap();
        assert_eq!(b, PolynomialField::coordinate(2, 1));

        assert!(lie_bracket(&dx, h.field(0)).is_err());
    }

    #[test]
    fn hormander_rank_examples() {
        let e = VectorFieldFamily::euclidean(3);
        assert_eq!(
            e.hormander_rank(&[0.2, 0.1, 9.0], 1).unwrap(),
            RankReport {
                rank: 3,
                step: Some(1)
            }
        );
        let h = VectorFieldFamily::heisenberg();
        assert_eq!(
            h.hormander_rank(&[0.0, 0.0, 0.0], 2).unwrap(),
            RankReport {
                rank: 3,
                step: Some(2)
            }
        );
        assert_eq!(
            h.hormander_rank(&[0.0, 0.0, 0.0], 1).unwrap(),
            RankReport {
                rank: 2,
                step: None
            }
        );
        let g = VectorFieldFamily::grushin();
        assert_eq!(
            g.hormander_rank(&[0.0, 0.0], 2).unwrap(),
            RankReport {
                rank: 2,
                step: Some(2)
            }
        );
        assert_eq!(
            g.hormander_rank(&[1.0, 0.0], 2).unwrap(),
            RankReport {
                rank: 2,
                step: Some(1)
            }
        );
        assert!(g.hormander_rank(&[1.0, 0.0], 0).is_err());
    }

    #[test]
    fn builtin_names_resolve() {
        assert_eq!(VectorFieldFamily::builtin("euclidean(4)").unwrap().n(), 4);
        assert_eq!(VectorFieldFamily::builtin("Euclidean2").unwrap().n(), 2);
        assert_eq!(VectorFieldFamily::builtin("heisenberg").unwrap().m(), 2);
        assert!(VectorFieldFamily::builtin("sphere").is_err());
        assert!(VectorFieldFamily::builtin("euclidean(0)").is_err());
    }

    #[test]
    fn family_file_round_trip() {
        let h = VectorFieldFamily::heisenberg();
        let text = h.to_toml_string();
        let back = VectorFieldFamily::from_toml_str(&text).unwrap();
        assert_eq!(back, h);

        let bad = "name = \"x\"\nn = 2\nm = 1\n[[fields]]\ncoefficients = [[[1.0, [0, 0, 0]]], []]\n";
        assert!(VectorFieldFamily::from_toml_str(bad).is_err());
        let unknown = "name = \"x\"\nn = 1\nm = 1\nextra = 3\n[[fields]]\ncoefficients = [[[1.0, [0]]]]\n";
        assert!(VectorFieldFamily::from_toml_str(unknown).is_err());
    }

    #[test]
    fn polynomial_pruning_and_display() {
        let p = Polynomial::from_terms(2, [(1.0, vec![1, 0]), (-1.0, vec![1, 0]), (2.0, vec![0, 2])])
            .unwrap();
        assert_eq!(p.terms().len(), 1);
        assert_eq!(p.to_string(), "2*x2^2");
        assert_eq!(p.degree(), 2);
        assert!(Polynomial::from_terms(2, [(1.0, vec![1])]).is_err());
    }

    fn arb_poly(dim: usize) -> impl Strategy<Value = Polynomial> {
        prop::collection::vec(
            (-3.0f64..3.0, prop::collection::vec(0u32..4, dim)),
            0..6,
        )
        .prop_map(move |t| Polynomial::from_terms(dim, t).unwrap())
    }

    fn arb_field(dim: usize) -> impl Strategy<Value = PolynomialField> {
        prop::collection::vec(arb_poly(dim), dim)
            .prop_map(|c| PolynomialField::new(c).unwrap())
    }

    proptest! {
        #[test]
        fn eval_matches_naive_monomial_sum(p in arb_poly(3), x in prop::collection::vec(-2.0f64..2.0, 3)) {
            let fast = p.eval(&x);
            let slow = naive_eval(&p, &x);
            let scale = p.terms().iter().map(|(e, c)| {
                c.abs() * e.iter().zip(&x).map(|(&k, xi)| xi.abs().powf(k as f64)).product::<f64>()
            }).sum::<f64>().max(1e-300);
            prop_assert!((fast - slow).abs() <= 1e-12 * scale);
        }

        #[test]
        fn bracket_is_antisymmetric(f in arb_field(3), g in arb_field(3)) {
            let a = lie_bracket(&f, &g).unwrap();
            let b = lie_bracket(&g, &f).unwrap();
            prop_assert!(a.add(&b).is_zero());
        }

        #[test]
        fn diffusion_tensor_is_gram_matrix(x in prop::collection::vec(-3.0f64..3.0, 3)) {
            for fam in [VectorFieldFamily::heisenberg(), VectorFieldFamily::euclidean(3)] {
                let a = fam.eval_coefficients(&x).unwrap();
                let t = fam.diffusion_tensor(&x).unwrap();
                for i in 0..3 {
                    for k in 0..3 {
                        let g: f64 = a.iter().map(|r| r[i] * r[k]).sum();
                        prop_assert!((g - t[i][k]).abs() <= 1e-15 * (1.0 + g.abs()));
                        prop_assert_eq!(t[i][k], t[k][i]);
                    }
                }
            }
        }

        #[test]
        fn builtins_are_bracket_generating(x in prop::collection::vec(-3.0f64..3.0, 3)) {
            let h = VectorFieldFamily::heisenberg();
            prop_assert_eq!(h.hormander_rank(&x, 2).unwrap().rank, 3);
            let g = VectorFieldFamily::grushin();
            prop_assert_eq!(g.hormander_rank(&x[..2], 2).unwrap().rank, 2);
            let e = VectorFieldFamily::euclidean(3);
            prop_assert_eq!(e.hormander_rank(&x, 2).unwrap().rank, 3);
        }
    }
}
