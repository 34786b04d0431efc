use crate::mesh::Point;

/// Implicit geometry: `Ω = {φ < 0}`, `Γ = {φ = 0}`.
pub trait LevelSet: Send + Sync {
    fn value(&self, p: Point) -> f64;

    /// Analytic gradient; only used for diagnostics, never for quadrature.
    fn gradient(&self, p: Point) -> Point;
}

#[inline]
fn radius(p: Point) -> f64 {
    p[0].hypot(p[1])
}

#[inline]
fn radial_unit(p: Point) -> Point {
    let r = radius(p);
    if r == 0.0 {
        [0.0, 0.0]
    } else {
        [p[0] / r, p[1] / r]
    }
}

/// Annulus `inner < |x| < outer` about the origin: `φ = max(inner − r, r − outer)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ring {
    pub inner: f64,
    pub outer: f64,
}

impl Default for Ring {
    fn default() -> Self {
        Self {
            inner: 0.25,
            outer: 0.75,
        }
    }
}

impl LevelSet for Ring {
    fn value(&self, p: Point) -> f64 {
        let r = radius(p);
        (self.inner - r).max(r - self.outer)
    }

    fn gradient(&self, p: Point) -> Point {
        let r = radius(p);
        let e = radial_unit(p);
        if self.inner - r > r - self.outer {
            [-e[0], -e[1]]
        } else {
            e
        }
    }
}

/// Exterior of a disc about the origin: `φ = radius − r`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CircleObstacle {
    pub radius: f64,
}

impl Default for CircleObstacle {
    fn default() -> Self {
        Self { radius: 0.25 }
    }
}

impl LevelSet for CircleObstacle {
    fn value(&self, p: Point) -> f64 {
        self.radius - radius(p)
    }

    fn gradient(&self, p: Point) -> Point {
        let e = radial_unit(p);
        [-e[0], -e[1]]
    }
}

/// Disc `|x − centre| < radius`: `φ = |x − centre| − radius`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Disc {
    pub centre: Point,
    pub radius: f64,
}

impl LevelSet for Disc {
    fn value(&self, p: Point) -> f64 {
        radius([p[0] - self.centre[0], p[1] - self.centre[1]]) - self.radius
    }

    fn gradient(&self, p: Point) -> Point {
        radial_unit([p[0] - self.centre[0], p[1] - self.centre[1]])
    }
}

/// Half plane `normal · x < offset`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HalfPlane {
    pub normal: Point,
    pub offset: f64,
}

impl LevelSet for HalfPlane {
    fn value(&self, p: Point) -> f64 {
        self.normal[0] * p[0] + self.normal[1] * p[1] - self.offset
    }

    fn gradient(&self, _: Point) -> Point {
        self.normal
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Constant(pub f64);

impl LevelSet for Constant {
    fn value(&self, _: Point) -> f64 {
        self.0
    }

    fn gradient(&self, _: Point) -> Point {
        [0.0, 0.0]
    }
}

/// Level set from a pair of closures.
pub struct FnLevelSet<F, G> {
    pub value: F,
    pub gradient: G,
}

impl<F, G> LevelSet for FnLevelSet<F, G>
where
    F: Fn(Point) -> f64 + Send + Sync,
    G: Fn(Point) -> Point + Send + Sync,
{
    fn value(&self, p: Point) -> f64 {
        (self.value)(p)
    }

    fn gradient(&self, p: Point) -> Point {
        (self.gradient)(p)
    }
}

/// Named geometries available from the command line.
pub fn predefined(name: &str) -> Option<Box<dyn LevelSet>> {
    match name {
        "ring" => Some(Box::new(Ring::default())),
        "circle-obstacle" => Some(Box::new(CircleObstacle::default())),
        _ => None,
    }
}
