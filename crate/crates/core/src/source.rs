use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::Point;

type Rule = Arc<dyn Fn(Point, Point) -> f64 + Send + Sync>;

/// Incoming boundary illumination `f_-(x, v)` on the inflow boundary, together with
/// declared bounds `lower <= f_- <= upper`.
#[derive(Clone)]
pub struct BoundarySource {
    rule: Rule,
    lower: f64,
    upper: f64,
    constant: Option<f64>,
}

impl fmt::Debug for BoundarySource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BoundarySource")
            .field("lower", &self.lower)
            .field("upper", &self.upper)
            .field("constant", &self.constant)
            .finish()
    }
}

impl BoundarySource {
    pub fn constant(c: f64) -> Result<Self> {
        if !(c >= 0.0 && c.is_finite()) {
            return Err(Error::Data(format!("boundary value must be finite and >= 0, got {c}")));
        }
        Ok(Self {
            rule: Arc::new(move |_, _| c),
            lower: c,
            upper: c,
            constant: Some(c),
        })
    }

    pub fn zero() -> Self {
        Self::constant(0.0).expect("zero is a valid constant")
    }

    /// General rule with declared bounds; `lower <= upper` and both finite.
    pub fn new(
        rule: impl Fn(Point, Point) -> f64 + Send + Sync + 'static,
        lower: f64,
        upper: f64,
    ) -> Result<Self> {
        if !(lower >= 0.0 && lower <= upper && upper.is_finite()) {
            return Err(Error::Data(format!(
                "invalid boundary bounds [{lower}, {upper}]"
            )));
        }
        Ok(Self {
            rule: Arc::new(rule),
            lower,
            upper,
            constant: None,
        })
    }

    /// Direction-independent profile `f_-(x, v) = f_0(x)`.
    pub fn isotropic(
        profile: impl Fn(Point) -> f64 + Send + Sync + 'static,
        lower: f64,
        upper: f64,
    ) -> Result<Self> {
        Self::new(move |x, _| profile(x), lower, upper)
    }

    pub fn sum(&self, other: &BoundarySource) -> BoundarySource {
        let (a, b) = (self.rule.clone(), other.rule.clone());
        BoundarySource {
            rule: Arc::new(move |x, v| a(x, v) + b(x, v)),
            lower: self.lower + other.lower,
            upper: self.upper + other.upper,
            constant: match (self.constant, other.constant) {
                (Some(p), Some(q)) => Some(p + q),
                _ => None,
            },
        }
    }

    #[inline]
    pub fn eval(&self, x: Point, v: Point) -> f64 {
        (self.rule)(x, v)
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn as_constant(&self) -> Option<f64> {
        self.constant
    }

    /// Strict positivity `0 < lower <= f_- <= upper` required by the forward theory.
    pub fn check_bounded_below(&self) -> Result<()> {
        if self.lower > 0.0 {
            Ok(())
        } else {
            Err(Error::Data(format!(
                "boundary source must be bounded below by a positive constant, lower = {}",
                self.lower
            )))
        }
    }
}
