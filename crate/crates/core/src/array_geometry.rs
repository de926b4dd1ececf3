//! Fibril array layouts and single-fibril compliance.
//!
//! All quantities are dimensionless: positions and lengths in units of the
//! mean fibril radius `a`, moduli as ratios against the plane-strain modulus
//! of the backing layer. Layouts are square grids with one node at the
//! origin; points exactly on a region boundary are kept.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::Write;

pub const SELF_TERM_COEF: f64 = 16.0 / (3.0 * std::f64::consts::PI);

/// Material and cross-section parameters shared by every fibril of a
/// template-built layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FibrilMaterial {
    /// a_i / a
    pub radius_ratio: f64,
    /// h_i / a
    pub length_ratio: f64,
    /// E_i / E*
    pub modulus_ratio: f64,
}

impl FibrilMaterial {
    pub fn new(radius_ratio: f64, length_ratio: f64, modulus_ratio: f64) -> Result<Self> {
        let m = FibrilMaterial {
            radius_ratio,
            length_ratio,
            modulus_ratio,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("radius_ratio", self.radius_ratio),
            ("length_ratio", self.length_ratio),
            ("modulus_ratio", self.modulus_ratio),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be finite and > 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// One fibril: dimensionless position plus material parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FibrilSpec {
    pub x_hat: f64,
    pub y_hat: f64,
    pub radius_ratio: f64,
    pub length_ratio: f64,
    pub modulus_ratio: f64,
}

impl FibrilSpec {
    pub fn at(x_hat: f64, y_hat: f64, material: FibrilMaterial) -> Self {
        FibrilSpec {
            x_hat,
            y_hat,
            radius_ratio: material.radius_ratio,
            length_ratio: material.length_ratio,
            modulus_ratio: material.modulus_ratio,
        }
    }

    pub fn material(&self) -> FibrilMaterial {
        FibrilMaterial {
            radius_ratio: self.radius_ratio,
            length_ratio: self.length_ratio,
            modulus_ratio: self.modulus_ratio,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_hat.is_finite() && self.y_hat.is_finite()) {
            return Err(Error::InvalidParameter(
                "fibril position must be finite".into(),
            ));
        }
        self.material().validate()
    }
}

/// Backing-layer elastic parameters in raw (not plane-strain) form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElasticContext {
    /// Poisson's ratio of the backing layer.
    pub poisson_ratio: f64,
    /// E_f / E: fibril modulus over backing-layer modulus.
    pub modulus_ratio_raw: f64,
}

impl ElasticContext {
    pub fn new(poisson_ratio: f64, modulus_ratio_raw: f64) -> Result<Self> {
        if !(poisson_ratio.is_finite() && poisson_ratio > -1.0 && poisson_ratio <= 0.5) {
            return Err(Error::InvalidParameter(format!(
                "poisson_ratio must lie in (-1, 0.5], got {poisson_ratio}"
            )));
        }
        if !(modulus_ratio_raw.is_finite() && modulus_ratio_raw > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "modulus_ratio_raw must be > 0, got {modulus_ratio_raw}"
            )));
        }
        Ok(ElasticContext {
            poisson_ratio,
            modulus_ratio_raw,
        })
    }
}

/// E_i / E* for a fibril of raw modulus E_f on a backing layer with Poisson
/// ratio nu: (E_f/E) (1 - nu^2).
pub fn plane_strain_ratio(ctx: &ElasticContext) -> f64 {
    ctx.modulus_ratio_raw * (1.0 - ctx.poisson_ratio * ctx.poisson_ratio)
}

/// Single-fibril extension compliance C_i = (E*/E_i)(a/a_i)^2 (h_i/a).
pub fn fibril_compliance(spec: &FibrilSpec) -> f64 {
    spec.length_ratio / (spec.modulus_ratio * spec.radius_ratio * spec.radius_ratio)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayoutKind {
    Circle,
    Square,
    Triangle,
    Custom,
}

impl std::fmt::Display for LayoutKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            LayoutKind::Circle => "circle",
            LayoutKind::Square => "square",
            LayoutKind::Triangle => "triangle",
            LayoutKind::Custom => "custom",
        };
        f.write_str(s)
    }
}

/// A fibril array. The fibril order is canonical: every per-fibril vector
/// elsewhere (designs, loads, CSV rows) is indexed in this order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FibrilArray {
    fibrils: Vec<FibrilSpec>,
    layout_kind: LayoutKind,
    /// Characteristic size: R/a (circle), half-side/a (square),
    /// circumradius/a (triangle), max center distance (custom).
    shape_param: f64,
    /// Grid center-to-center distance d/a (0 for custom layouts).
    spacing: f64,
}

impl FibrilArray {
    /// Circular layout: grid points with x^2 + y^2 <= R^2.
    ///
    /// The grid is the square lattice of pitch `spacing` with one node at the
    /// origin; rows are emitted bottom-to-top, left-to-right.
    pub fn build_circle(radius_hat: f64, spacing: f64, material: FibrilMaterial) -> Result<Self> {
        check_shape_params("radius_hat", radius_hat, spacing)?;
        material.validate()?;
        let r2 = radius_hat * radius_hat;
        let fibrils = grid_points(radius_hat, radius_hat, spacing, material, |x, y| {
            x * x + y * y <= r2
        });
        Self::from_parts(fibrils, LayoutKind::Circle, radius_hat, spacing)
    }

    /// Square layout: grid points with |x| <= half_side and |y| <= half_side.
    pub fn build_square(half_side_hat: f64, spacing: f64, material: FibrilMaterial) -> Result<Self> {
        check_shape_params("half_side_hat", half_side_hat, spacing)?;
        material.validate()?;
        let h = half_side_hat;
        let fibrils = grid_points(h, h, spacing, material, |x, y| {
            x.abs() <= h && y.abs() <= h
        });
        Self::from_parts(fibrils, LayoutKind::Square, half_side_hat, spacing)
    }

    /// Equilateral triangle layout, apex along +y, centroid at the origin,
    /// height 1.5 x circumradius. Grid points inside or on the boundary are
    /// kept.
    pub fn build_triangle(
        circumradius_hat: f64,
        spacing: f64,
        material: FibrilMaterial,
    ) -> Result<Self> {
        check_shape_params("circumradius_hat", circumradius_hat, spacing)?;
        material.validate()?;
        let r = circumradius_hat;
        // Vertices at polar angles 90, 210, 330 degrees.
        let verts = [
            (0.0, r),
            (-r * 3f64.sqrt() / 2.0, -r / 2.0),
            (r * 3f64.sqrt() / 2.0, -r / 2.0),
        ];
        let fibrils = grid_points(r, r, spacing, material, |x, y| {
            point_in_triangle(x, y, &verts)
        });
        Self::from_parts(fibrils, LayoutKind::Triangle, circumradius_hat, spacing)
    }

    /// Custom layout from an explicit fibril list. Validates positivity,
    /// mean radius normalization, and pairwise non-overlap.
    pub fn from_fibrils(fibrils: Vec<FibrilSpec>) -> Result<Self> {
        if fibrils.is_empty() {
            return Err(Error::EmptyLayout("custom layout".into()));
        }
        for f in &fibrils {
            f.validate()?;
        }
        let mean_radius =
            fibrils.iter().map(|f| f.radius_ratio).sum::<f64>() / fibrils.len() as f64;
        if (mean_radius - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidLayout(format!(
                "mean radius_ratio must be 1 (positions are in units of the mean radius), got {mean_radius}"
            )));
        }
        for i in 0..fibrils.len() {
            for j in (i + 1)..fibrils.len() {
                let dx = fibrils[i].x_hat - fibrils[j].x_hat;
                let dy = fibrils[i].y_hat - fibrils[j].y_hat;
                let dist = (dx * dx + dy * dy).sqrt();
                let min_dist = fibrils[i].radius_ratio + fibrils[j].radius_ratio;
                if dist < min_dist {
                    return Err(Error::InvalidLayout(format!(
                        "fibrils {i} and {j} overlap: center distance {dist} < {min_dist}"
                    )));
                }
            }
        }
        let shape_param = fibrils
            .iter()
            .map(|f| f.x_hat.hypot(f.y_hat))
            .fold(0.0, f64::max);
        Ok(FibrilArray {
            fibrils,
            layout_kind: LayoutKind::Custom,
            shape_param,
            spacing: 0.0,
        })
    }

    fn from_parts(
        fibrils: Vec<FibrilSpec>,
        layout_kind: LayoutKind,
        shape_param: f64,
        spacing: f64,
    ) -> Result<Self> {
        if fibrils.is_empty() {
            return Err(Error::EmptyLayout(format!(
                "{layout_kind} with shape_param {shape_param} and spacing {spacing} contains no grid point"
            )));
        }
        Ok(FibrilArray {
            fibrils,
            layout_kind,
            shape_param,
            spacing,
        })
    }

    pub fn n(&self) -> usize {
        self.fibrils.len()
    }

    pub fn fibrils(&self) -> &[FibrilSpec] {
        &self.fibrils
    }

    pub fn layout_kind(&self) -> LayoutKind {
        self.layout_kind
    }

    pub fn shape_param(&self) -> f64 {
        self.shape_param
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn positions(&self) -> Vec<[f64; 2]> {
        self.fibrils.iter().map(|f| [f.x_hat, f.y_hat]).collect()
    }

    /// Largest center distance from the origin; the radial scale used for
    /// r/R profiles. Zero for a single fibril at the origin.
    pub fn characteristic_radius(&self) -> f64 {
        self.fibrils
            .iter()
            .map(|f| f.x_hat.hypot(f.y_hat))
            .fold(0.0, f64::max)
    }

    /// Per-fibril extension compliance of the as-built (uniform template)
    /// array.
    pub fn template_compliances(&self) -> Vec<f64> {
        self.fibrils.iter().map(fibril_compliance).collect()
    }

    /// Re-check the construction invariants; used after deserializing an
    /// array from an artifact file.
    pub fn validate(&self) -> Result<()> {
        if self.fibrils.is_empty() {
            return Err(Error::EmptyLayout(format!("{} layout", self.layout_kind)));
        }
        for f in &self.fibrils {
            f.validate()?;
        }
        let mean_radius =
            self.fibrils.iter().map(|f| f.radius_ratio).sum::<f64>() / self.fibrils.len() as f64;
        if (mean_radius - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidLayout(format!(
                "mean radius_ratio must be 1, got {mean_radius}"
            )));
        }
        for i in 0..self.fibrils.len() {
            for j in (i + 1)..self.fibrils.len() {
                let dx = self.fibrils[i].x_hat - self.fibrils[j].x_hat;
                let dy = self.fibrils[i].y_hat - self.fibrils[j].y_hat;
                let dist = (dx * dx + dy * dy).sqrt();
                if dist < self.fibrils[i].radius_ratio + self.fibrils[j].radius_ratio {
                    return Err(Error::InvalidLayout(format!(
                        "fibrils {i} and {j} overlap"
                    )));
                }
            }
        }
        Ok(())
    }

    /// CSV export; row order is the canonical fibril index order.
    pub fn write_layout_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "fibril_id,x_hat,y_hat,radius_ratio,length_ratio,modulus_ratio"
        )?;
        for (i, f) in self.fibrils.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                i, f.x_hat, f.y_hat, f.radius_ratio, f.length_ratio, f.modulus_ratio
            )?;
        }
        Ok(())
    }
}

fn check_shape_params(name: &str, value: f64, spacing: f64) -> Result<()> {
    if !(value.is_finite() && value > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "{name} must be finite and > 0, got {value}"
        )));
    }
    if !(spacing.is_finite() && spacing >= 2.0) {
        return Err(Error::InvalidParameter(format!(
            "spacing must be >= 2 (center distance of touching unit-radius fibrils), got {spacing}"
        )));
    }
    Ok(())
}

/// Enumerate square-lattice points in [-x_extent, x_extent] x [-y_extent,
/// y_extent] passing `keep`, scanning y then x in ascending order.
fn grid_points(
    x_extent: f64,
    y_extent: f64,
    spacing: f64,
    material: FibrilMaterial,
    keep: impl Fn(f64, f64) -> bool,
) -> Vec<FibrilSpec> {
    let imax = (x_extent / spacing).floor() as i64;
    let jmax = (y_extent / spacing).floor() as i64;
    let mut out = Vec::new();
    for j in -jmax..=jmax {
        let y = j as f64 * spacing;
        for i in -imax..=imax {
            let x = i as f64 * spacing;
            if keep(x, y) {
                out.push(FibrilSpec::at(x, y, material));
            }
        }
    }
    out
}

/// Inclusive point-in-triangle test via signed areas against each edge.
fn point_in_triangle(x: f64, y: f64, verts: &[(f64, f64); 3]) -> bool {
    // Tolerance scaled to the triangle size so boundary nodes are kept.
    let scale = verts
        .iter()
        .map(|(vx, vy)| vx.abs().max(vy.abs()))
        .fold(1.0, f64::max);
    let eps = 1e-12 * scale * scale;
    let mut has_pos = false;
    let mut has_neg = false;
    for k in 0..3 {
        let (x1, y1) = verts[k];
        let (x2, y2) = verts[(k + 1) % 3];
        let cross = (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1);
        if cross > eps {
            has_pos = true;
        }
        if cross < -eps {
            has_neg = true;
        }
    }
    !(has_pos && has_neg)
}
