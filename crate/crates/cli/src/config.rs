use clap::{Args, ValueEnum};
use ncpiv_core::kernels::ContourRules;
use ncpiv_core::quadrature::default_line_trunc;
use ncpiv_core::{FamilyKind, Variant, WeightFamily};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    A,
    B,
    Scalar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// Parameters shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct RunConfig {
    /// Weight family.
    #[arg(long, value_enum, default_value = "a")]
    pub family: FamilyArg,
    /// Nilpotent shift parameter.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub nu: f64,
    /// Number of polynomials (kernel rank), or the ODE parameter for `painleve`.
    #[arg(long, default_value_t = 3)]
    pub n: usize,
    #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
    pub s_min: f64,
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    pub s_max: f64,
    #[arg(long, default_value_t = 7)]
    pub s_steps: usize,
    /// Gauss-Hermite nodes for family construction and tail integrals.
    #[arg(long, default_value_t = 200)]
    pub quad_points: usize,
    /// Radius of the circle contour.
    #[arg(long, default_value_t = 1.0)]
    pub radius: f64,
    /// Abscissa of the vertical line contour.
    #[arg(long, default_value_t = 2.0)]
    pub line_re: f64,
    /// Half-length of the truncated line contour [default: sqrt(line_re^2 + 40)].
    #[arg(long)]
    pub line_trunc: Option<f64>,
    /// Integration step.
    #[arg(long, default_value_t = 1e-3)]
    pub step: f64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Output file [default: stdout].
    #[arg(long)]
    pub out: Option<std::path::PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

pub const CIRCLE_NODES: usize = 256;
pub const LINE_NODES: usize = 400;
const MIN_QUAD_POINTS: usize = 20;

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |m: String| Err(CliError::Usage(m));
        if !self.nu.is_finite() {
            return usage(format!("nu must be finite, got {}", self.nu));
        }
        if !(self.s_min.is_finite() && self.s_max.is_finite()) || self.s_min >= self.s_max {
            return usage(format!("s-min ({}) must be below s-max ({})", self.s_min, self.s_max));
        }
        if self.s_steps < 2 {
            return usage(format!("s-steps must be at least 2, got {}", self.s_steps));
        }
        if self.quad_points < MIN_QUAD_POINTS {
            return usage(format!("quad-points must be at least {MIN_QUAD_POINTS}, got {}", self.quad_points));
        }
        if !(self.radius > 0.0) || !self.line_re.is_finite() {
            return usage(format!("invalid contour radius {} / line-re {}", self.radius, self.line_re));
        }
        if self.radius >= self.line_re {
            return usage(format!(
                "contours intersect ordering: radius {} must be below line-re {}",
                self.radius, self.line_re
            ));
        }
        if let Some(t) = self.line_trunc {
            if !(t > 0.0 && t.is_finite()) {
                return usage(format!("line-trunc must be positive, got {t}"));
            }
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return usage(format!("step must be positive, got {}", self.step));
        }
        Ok(())
    }

    pub fn weight(&self) -> WeightFamily {
        match self.family {
            FamilyArg::A => WeightFamily::example_a(self.nu),
            FamilyArg::B => WeightFamily::example_b(self.nu),
            FamilyArg::Scalar => WeightFamily::scalar(),
        }
    }

    pub fn is_matrix(&self) -> bool {
        self.weight().kind != FamilyKind::Scalar
    }

    pub fn variant(&self) -> Result<Variant, CliError> {
        match self.family {
            FamilyArg::A => Ok(Variant::A),
            FamilyArg::B => Ok(Variant::B),
            FamilyArg::Scalar => Err(CliError::Usage("painleve needs family a or b".into())),
        }
    }

    pub fn line_trunc(&self) -> f64 {
        self.line_trunc.unwrap_or_else(|| default_line_trunc(self.line_re))
    }

    pub fn contour_rules(&self) -> Result<ContourRules, CliError> {
        ContourRules::new(self.radius, CIRCLE_NODES, self.line_re, self.line_trunc(), LINE_NODES)
            .map_err(|e| CliError::Usage(e.to_string()))
    }

    /// `s_steps` equispaced points on `[s_min, s_max]`.
    pub fn s_grid(&self) -> Vec<f64> {
        let k = (self.s_steps - 1) as f64;
        (0..self.s_steps)
            .map(|i| if i + 1 == self.s_steps { self.s_max } else { self.s_min + (self.s_max - self.s_min) * i as f64 / k })
            .collect()
    }
}
