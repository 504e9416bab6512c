//! Scalar expressions over coordinates, used for fields given as text.
//!
//! Variables are `x1..xn`; `x`, `y`, `z` alias the first three coordinates and `t` the
//! last coordinate when `n = 3`. Besides the usual functions, `step(s)` is 1 for `s > 0`
//! and 0 otherwise.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{GridDomain, GridField};

#[derive(Clone, Debug)]
pub struct ScalarExpr {
    source: String,
    expr: meval::Expr,
    n: usize,
}

fn names(n: usize) -> Vec<Vec<&'static str>> {
    const ALIASES: [&str; 3] = ["x", "y", "z"];
    const INDEXED: [&str; 9] = ["x1", "x2", "x3", "x4", "x5", "x6", "x7", "x8", "x9"];
    (0..n)
        .map(|k| {
            let mut v = vec![INDEXED[k]];
            if k < 3 {
                v.push(ALIASES[k]);
            }
            if n == 3 && k == 2 {
                v.push("t");
            }
            v
        })
        .collect()
}

impl ScalarExpr {
    pub fn parse(source: &str, n: usize) -> Result<Self> {
        if n == 0 || n > 9 {
            return Err(Error::Expression(format!("unsupported dimension {n}")));
        }
        let expr: meval::Expr = source
            .parse()
            .map_err(|e| Error::Expression(format!("{source:?}: {e}")))?;
        let out = Self {
            source: source.to_string(),
            expr,
            n,
        };
        out.try_eval(&vec![0.0; n])?;
        Ok(out)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    fn try_eval(&self, x: &[f64]) -> Result<f64> {
        let mut ctx = meval::Context::new();
        for (k, group) in names(self.n).iter().enumerate() {
            for name in group {
                ctx.var(*name, x[k]);
            }
        }
        ctx.func("step", |s| if s > 0.0 { 1.0 } else { 0.0 });
        self.expr
            .eval_with_context(ctx)
            .map_err(|e| Error::Expression(format!("{:?}: {e}", self.source)))
    }

    /// Evaluates at `x`; the expression was validated at parse time, so failures here
    /// can only come from dimension mismatches and are mapped to NaN.
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.try_eval(x).unwrap_or(f64::NAN)
    }

    pub fn sample(&self, grid: &Arc<GridDomain>) -> GridField {
        GridField::from_fn(grid.clone(), |x| self.eval(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variables_and_aliases() {
        let e = ScalarExpr::parse("x1 + 2*y - t", 3).unwrap();
        assert_eq!(e.eval(&[1.0, 2.0, 3.0]), 2.0);
        let e = ScalarExpr::parse("exp(x + y)", 2).unwrap();
        assert!((e.eval(&[0.5, 0.5]) - 1f64.exp()).abs() < 1e-15);
        let e = ScalarExpr::parse("1 - 2*step(x - 0.5)", 2).unwrap();
        assert_eq!(e.eval(&[0.7, 0.0]), -1.0);
        assert_eq!(e.eval(&[0.2, 0.0]), 1.0);
    }

    #[test]
    fn unknown_variable_rejected() {
        assert!(ScalarExpr::parse("x + w", 2).is_err());
        assert!(ScalarExpr::parse("z", 2).is_err());
        assert!(ScalarExpr::parse("(x", 2).is_err());
    }
}
