//! Fitted synthesis models: LUT-count and throughput planes for both
//! inference-machine variants, plus the dynamic-power scaling law.
//!
//! The plane coefficients are the recorded regression results of the
//! synthesis campaign and are kept verbatim, including the ~1e-13 `T`
//! terms (numerically negligible, likely fit artifacts, kept as-is). The
//! synthesis tables they summarize ship alongside as embedded CSV data so
//! the residual checks run offline: they are data, not model.

use std::sync::OnceLock;

/// Which machine the model describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    OneShot,
    Pipeline,
}

/// Which figure the plane predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    /// Logic cells used as LUTs.
    Nlut,
    /// Throughput in mega samples per second.
    Rs,
}

/// An affine fit `intercept + coef_n * N + coef_t * T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneModel {
    pub variant: Variant,
    pub quantity: Quantity,
    pub intercept: f64,
    pub coef_n: f64,
    pub coef_t: f64,
    pub r_squared: f64,
}

pub const OS_NLUT: PlaneModel = PlaneModel {
    variant: Variant::OneShot,
    quantity: Quantity::Nlut,
    intercept: 1682.0,
    coef_n: 532.2,
    coef_t: 6.493e-13,
    r_squared: 0.9766,
};

pub const OS_RS: PlaneModel = PlaneModel {
    variant: Variant::OneShot,
    quantity: Quantity::Rs,
    intercept: 13.24,
    coef_n: -0.1163,
    coef_t: 3.414e-16,
    r_squared: 0.7521,
};

pub const P_NLUT: PlaneModel = PlaneModel {
    variant: Variant::Pipeline,
    quantity: Quantity::Nlut,
    intercept: 1171.0,
    coef_n: 491.1,
    coef_t: 4.245e-13,
    r_squared: 0.9838,
};

pub const P_RS: PlaneModel = PlaneModel {
    variant: Variant::Pipeline,
    quantity: Quantity::Rs,
    intercept: 18.48,
    coef_n: -0.09704,
    coef_t: -5.365e-16,
    r_squared: 0.5366,
};

pub fn plane(variant: Variant, quantity: Quantity) -> &'static PlaneModel {
    match (variant, quantity) {
        (Variant::OneShot, Quantity::Nlut) => &OS_NLUT,
        (Variant::OneShot, Quantity::Rs) => &OS_RS,
        (Variant::Pipeline, Quantity::Nlut) => &P_NLUT,
        (Variant::Pipeline, Quantity::Rs) => &P_RS,
    }
}

impl PlaneModel {
    /// Plane value at `(N, T)`. Outside the fitted grid this is an
    /// extrapolation; see [`PlaneModel::in_fit_domain`].
    pub fn estimate(&self, n_bits: f64, t_bits: f64) -> f64 {
        self.intercept + self.coef_n * n_bits + self.coef_t * t_bits
    }

    /// True when `(N, T)` lies inside the synthesis grid the plane was
    /// fitted on (`N` in [8, 16], `T` in [4, 10]).
    pub fn in_fit_domain(n_bits: f64, t_bits: f64) -> bool {
        (8.0..=16.0).contains(&n_bits) && (4.0..=10.0).contains(&t_bits)
    }
}

/// Inferences per second for a sample rate, `rules * Rs`.
pub fn mflips(rs_msps: f64, rule_count: usize) -> f64 {
    rs_msps * rule_count as f64
}

/// Dynamic power saving of a working design against a reference design:
/// `(N_ref * F_ref^3) / (N_work * F_work^3)`, with `N` in gates and `F` the
/// maximum clock in MHz. All inputs must be positive.
pub fn dynamic_power_saving(
    n_ref_gates: f64,
    f_ref_mhz: f64,
    n_work_gates: f64,
    f_work_mhz: f64,
) -> f64 {
    assert!(
        n_ref_gates > 0.0 && f_ref_mhz > 0.0 && n_work_gates > 0.0 && f_work_mhz > 0.0,
        "power saving needs positive gate counts and clocks"
    );
    (n_ref_gates * f_ref_mhz.powi(3)) / (n_work_gates * f_work_mhz.powi(3))
}

/// One synthesis measurement row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthesisRow {
    pub n_bits: u8,
    pub t_bits: u8,
    pub registers: u32,
    pub nlut: u32,
    pub sample_ns: f64,
    pub rs_msps: f64,
}

macro_rules! embedded_table {
    ($fn_name:ident, $file:literal) => {
        pub fn $fn_name() -> &'static [SynthesisRow] {
            static ROWS: OnceLock<Vec<SynthesisRow>> = OnceLock::new();
            ROWS.get_or_init(|| parse_table(include_str!($file)))
        }
    };
}

embedded_table!(fimm_one_shot_table, "costmodel/tsfimm_os.csv");
embedded_table!(fimm_pipeline_table, "costmodel/tsfimm_p.csv");
embedded_table!(fuzzy_pi_one_shot_table, "costmodel/fuzzy_pi_os.csv");
embedded_table!(fuzzy_pi_pipeline_table, "costmodel/fuzzy_pi_p.csv");

/// The synthesis rows the `variant`'s planes were fitted on.
pub fn fitted_table(variant: Variant) -> &'static [SynthesisRow] {
    match variant {
        Variant::OneShot => fimm_one_shot_table(),
        Variant::Pipeline => fimm_pipeline_table(),
    }
}

fn parse_table(text: &str) -> Vec<SynthesisRow> {
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            SynthesisRow {
                n_bits: f[0].parse().expect("n"),
                t_bits: f[1].parse().expect("t"),
                registers: f[2].parse().expect("registers"),
                nlut: f[3].parse().expect("nlut"),
                sample_ns: f[4].parse().expect("sample_ns"),
                rs_msps: f[5].parse().expect("rs"),
            }
        })
        .collect()
}
