//! Membership function module: fuzzification of the normalized inputs.
//!
//! Each input is matched against an ordered list of membership functions
//! (a left-plateau trapezoid at the negative extreme, triangles in between,
//! a right-plateau trapezoid at the positive extreme, or an arbitrary
//! lookup table). Breakpoints and reciprocal slopes are design constants in
//! `sW.T` with `W = 2*T + 1`; the ramp output is an `uN.N` grade.
//!
//! Division never happens at run time: each ramp `(d - x)/(d - c)` is a
//! wide exact subtraction followed by a multiply with the precomputed
//! reciprocal `1/(d - c)`, which is quantized with floor at design time.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fixedpoint::{shift_round, FixedFormat, FixedValue, RoundingMode};

#[derive(Debug, Error)]
pub enum MembershipError {
    #[error("membership `{label}`: breakpoints must satisfy {requirement}")]
    BadBreakpoints {
        label: String,
        requirement: &'static str,
    },
    #[error("membership `{label}`: breakpoints must lie in [-1, 1]")]
    BreakpointRange { label: String },
    #[error("membership `{label}`: lookup table needs {expected} entries, got {got}")]
    LutSize {
        label: String,
        expected: usize,
        got: usize,
    },
    #[error("input {0} has no membership functions")]
    EmptyInput(usize),
    #[error("bank leaves input {input} uncovered at x = {x} (all grades zero)")]
    CoverageGap { input: usize, x: f64 },
    #[error("input index {0} out of range")]
    BadInputIndex(usize),
}

/// Real-valued description of one membership function, as written in config
/// files. Quantized into a [`MembershipSpec`] when a bank is compiled for a
/// concrete `(N, T)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MfShape {
    /// Plateau at 1 for `x < c`, ramp down to 0 at `d`.
    RightTrapezoid { label: String, c: f64, d: f64 },
    /// Feet at `e` and `d`, apex at `m`.
    Triangle {
        label: String,
        e: f64,
        m: f64,
        d: f64,
    },
    /// Zero for `x < e`, ramp up to the plateau at 1 for `x > f`.
    LeftTrapezoid { label: String, e: f64, f: f64 },
    /// Arbitrary grade table with one entry per representable input code.
    Lut { label: String, table: Vec<f64> },
}

impl MfShape {
    pub fn label(&self) -> &str {
        match self {
            MfShape::RightTrapezoid { label, .. }
            | MfShape::Triangle { label, .. }
            | MfShape::LeftTrapezoid { label, .. }
            | MfShape::Lut { label, .. } => label,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MembershipKind {
    RightTrapezoid,
    Triangle,
    LeftTrapezoid,
    Lut,
}

/// A design-time constant: the quantized `sW.T` word next to the real value
/// it was derived from (the reference engine evaluates with the reals).
#[derive(Debug, Clone, Copy)]
struct Breakpoint {
    fixed: FixedValue,
    real: f64,
}

#[derive(Debug, Clone)]
enum Curve {
    RightTrapezoid {
        c: Breakpoint,
        d: Breakpoint,
        recip: FixedValue,
    },
    Triangle {
        e: Breakpoint,
        m: Breakpoint,
        d: Breakpoint,
        recip_left: FixedValue,
        recip_right: FixedValue,
    },
    LeftTrapezoid {
        e: Breakpoint,
        f: Breakpoint,
        recip: FixedValue,
    },
    Lut {
        fixed: Vec<FixedValue>,
        real: Vec<f64>,
    },
}

/// One compiled membership function.
#[derive(Debug, Clone)]
pub struct MembershipSpec {
    label: String,
    curve: Curve,
}

impl MembershipSpec {
    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn kind(&self) -> MembershipKind {
        match self.curve {
            Curve::RightTrapezoid { .. } => MembershipKind::RightTrapezoid,
            Curve::Triangle { .. } => MembershipKind::Triangle,
            Curve::LeftTrapezoid { .. } => MembershipKind::LeftTrapezoid,
            Curve::Lut { .. } => MembershipKind::Lut,
        }
    }

    /// Double-precision grade from the unquantized design constants.
    pub fn eval_reference(&self, x: f64) -> f64 {
        match &self.curve {
            Curve::RightTrapezoid { c, d, .. } => {
                if x > d.real {
                    0.0
                } else if x < c.real {
                    1.0
                } else {
                    (d.real - x) / (d.real - c.real)
                }
            }
            Curve::LeftTrapezoid { e, f, .. } => {
                if x < e.real {
                    0.0
                } else if x > f.real {
                    1.0
                } else {
                    (x - e.real) / (f.real - e.real)
                }
            }
            Curve::Triangle { e, m, d, .. } => {
                if x < m.real {
                    if x < e.real {
                        0.0
                    } else {
                        (x - e.real) / (m.real - e.real)
                    }
                } else if x > d.real {
                    0.0
                } else {
                    (d.real - x) / (d.real - m.real)
                }
            }
            Curve::Lut { real, .. } => {
                // nearest representable code, mirroring the fixed path
                let idx = ((x.clamp(-1.0, 1.0) + 1.0) * (real.len() as f64 / 2.0)).round() as usize;
                real[idx.min(real.len() - 1)]
            }
        }
    }
}

/// The per-input membership banks, compiled for one `(N, T)` configuration.
#[derive(Debug, Clone)]
pub struct MembershipBank {
    n_bits: u8,
    t_bits: u8,
    mode: RoundingMode,
    inputs: Vec<Vec<MembershipSpec>>,
}

impl MembershipBank {
    /// Quantizes the real-valued shapes into `sW.T` constants (`W = 2T + 1`)
    /// and validates orderings, ranges and input coverage.
    pub fn compile(
        shapes: &[Vec<MfShape>],
        n_bits: u8,
        t_bits: u8,
        mode: RoundingMode,
    ) -> Result<Self, MembershipError> {
        let mut inputs = Vec::with_capacity(shapes.len());
        for (input, list) in shapes.iter().enumerate() {
            if list.is_empty() {
                return Err(MembershipError::EmptyInput(input));
            }
            let specs = list
                .iter()
                .map(|shape| compile_one(shape, n_bits, t_bits, mode))
                .collect::<Result<Vec<_>, _>>()?;
            inputs.push(specs);
        }
        let bank = Self {
            n_bits,
            t_bits,
            mode,
            inputs,
        };
        bank.check_coverage()?;
        Ok(bank)
    }

    pub fn n_bits(&self) -> u8 {
        self.n_bits
    }

    pub fn t_bits(&self) -> u8 {
        self.t_bits
    }

    pub fn rounding(&self) -> RoundingMode {
        self.mode
    }

    pub fn num_inputs(&self) -> usize {
        self.inputs.len()
    }

    pub fn functions(&self, input: usize) -> &[MembershipSpec] {
        &self.inputs[input]
    }

    /// Grades of every membership function of `input`, in bank order.
    pub fn fuzzify(&self, input: usize, x: FixedValue) -> Result<Vec<FixedValue>, MembershipError> {
        let mut out = Vec::new();
        self.fuzzify_into(input, x, &mut out)?;
        Ok(out)
    }

    /// Allocation-free variant for hot loops; clears and refills `out`.
    pub fn fuzzify_into(
        &self,
        input: usize,
        x: FixedValue,
        out: &mut Vec<FixedValue>,
    ) -> Result<(), MembershipError> {
        let specs = self
            .inputs
            .get(input)
            .ok_or(MembershipError::BadInputIndex(input))?;
        out.clear();
        out.extend(
            specs
                .iter()
                .map(|spec| eval_fixed(spec, x, self.n_bits, self.mode)),
        );
        Ok(())
    }

    /// Every representable `sV.N` input code must excite at least one
    /// function; this is what keeps the defuzzifier denominator nonzero.
    fn check_coverage(&self) -> Result<(), MembershipError> {
        let v_fmt = self.input_format();
        // Exhaustive for the widths the experiments use; subsampled above
        // N = 16 to keep construction cheap.
        let step = if self.n_bits <= 16 {
            1
        } else {
            1i128 << (self.n_bits - 16)
        };
        for (input, specs) in self.inputs.iter().enumerate() {
            let mut raw = v_fmt.raw_min();
            while raw <= v_fmt.raw_max() {
                let x = FixedValue::from_raw(raw, v_fmt).expect("in range");
                let covered = specs
                    .iter()
                    .any(|spec| !eval_fixed(spec, x, self.n_bits, self.mode).is_zero());
                if !covered {
                    return Err(MembershipError::CoverageGap {
                        input,
                        x: x.value(),
                    });
                }
                raw += step;
            }
        }
        Ok(())
    }

    /// The `sV.N` format of the inputs this bank fuzzifies (`V = N + 1`).
    pub fn input_format(&self) -> FixedFormat {
        FixedFormat::s(self.n_bits + 1, self.n_bits)
    }

    /// The `uN.N` format of the grades it produces.
    pub fn grade_format(&self) -> FixedFormat {
        FixedFormat::u(self.n_bits, self.n_bits)
    }
}

/// Grade of a plateau-left trapezoid: 1 below `c`, `(d - x) / (d - c)`
/// between `c` and `d`, 0 above `d`.
pub fn mu_right_trapezoid(
    x: FixedValue,
    spec: &MembershipSpec,
    n_bits: u8,
    mode: RoundingMode,
) -> FixedValue {
    debug_assert_eq!(spec.kind(), MembershipKind::RightTrapezoid);
    eval_fixed(spec, x, n_bits, mode)
}

/// Grade of a plateau-right trapezoid: 0 below `e`, `(x - e) / (f - e)`
/// between `e` and `f`, 1 above `f`.
pub fn mu_left_trapezoid(
    x: FixedValue,
    spec: &MembershipSpec,
    n_bits: u8,
    mode: RoundingMode,
) -> FixedValue {
    debug_assert_eq!(spec.kind(), MembershipKind::LeftTrapezoid);
    eval_fixed(spec, x, n_bits, mode)
}

/// Triangle grade: rising branch below the apex `m`, falling branch at and
/// above it.
pub fn mu_triangle(
    x: FixedValue,
    spec: &MembershipSpec,
    n_bits: u8,
    mode: RoundingMode,
) -> FixedValue {
    debug_assert_eq!(spec.kind(), MembershipKind::Triangle);
    eval_fixed(spec, x, n_bits, mode)
}

/// The constant format for breakpoints and reciprocal slopes: `sW.T` with
/// `W = 2T + 1`.
pub fn constant_format(t_bits: u8) -> FixedFormat {
    FixedFormat::s(2 * t_bits + 1, t_bits)
}

fn compile_one(
    shape: &MfShape,
    n_bits: u8,
    t_bits: u8,
    mode: RoundingMode,
) -> Result<MembershipSpec, MembershipError> {
    let label = shape.label().to_string();
    let fmt = constant_format(t_bits);
    let bp = |v: f64| Breakpoint {
        fixed: FixedValue::quantize(v, fmt, mode),
        real: v,
    };
    // Reciprocals come from the real denominators and always truncate.
    let recip = |den: f64| FixedValue::quantize(1.0 / den, fmt, RoundingMode::Floor);
    let in_range = |vals: &[f64]| vals.iter().all(|v| (-1.0..=1.0).contains(v));

    let curve = match *shape {
        MfShape::RightTrapezoid { c, d, .. } => {
            if !in_range(&[c, d]) {
                return Err(MembershipError::BreakpointRange { label });
            }
            if c >= d {
                return Err(MembershipError::BadBreakpoints {
                    label,
                    requirement: "c < d",
                });
            }
            Curve::RightTrapezoid {
                c: bp(c),
                d: bp(d),
                recip: recip(d - c),
            }
        }
        MfShape::LeftTrapezoid { e, f, .. } => {
            if !in_range(&[e, f]) {
                return Err(MembershipError::BreakpointRange { label });
            }
            if e >= f {
                return Err(MembershipError::BadBreakpoints {
                    label,
                    requirement: "e < f",
                });
            }
            Curve::LeftTrapezoid {
                e: bp(e),
                f: bp(f),
                recip: recip(f - e),
            }
        }
        MfShape::Triangle { e, m, d, .. } => {
            if !in_range(&[e, m, d]) {
                return Err(MembershipError::BreakpointRange { label });
            }
            if e >= m || m >= d {
                return Err(MembershipError::BadBreakpoints {
                    label,
                    requirement: "e < m < d",
                });
            }
            Curve::Triangle {
                e: bp(e),
                m: bp(m),
                d: bp(d),
                recip_left: recip(m - e),
                recip_right: recip(d - m),
            }
        }
        MfShape::Lut { ref table, .. } => {
            let expected = 1usize << (n_bits + 1);
            if table.len() != expected {
                return Err(MembershipError::LutSize {
                    label,
                    expected,
                    got: table.len(),
                });
            }
            let grade_fmt = FixedFormat::u(n_bits, n_bits);
            Curve::Lut {
                fixed: table
                    .iter()
                    .map(|&v| FixedValue::quantize(v, grade_fmt, mode))
                    .collect(),
                real: table.clone(),
            }
        }
    };
    Ok(MembershipSpec { label, curve })
}

fn eval_fixed(spec: &MembershipSpec, x: FixedValue, n_bits: u8, mode: RoundingMode) -> FixedValue {
    let grade_fmt = FixedFormat::u(n_bits, n_bits);
    match &spec.curve {
        Curve::RightTrapezoid { c, d, recip } => falling_ramp(x, *c, *d, *recip, grade_fmt, mode),
        Curve::LeftTrapezoid { e, f, recip } => rising_ramp(x, *e, *f, *recip, grade_fmt, mode),
        Curve::Triangle {
            e,
            m,
            d,
            recip_left,
            recip_right,
        } => {
            if cmp_aligned(x, m.fixed).is_lt() {
                rising_ramp(x, *e, *m, *recip_left, grade_fmt, mode)
            } else {
                falling_ramp(x, *m, *d, *recip_right, grade_fmt, mode)
            }
        }
        Curve::Lut { fixed, .. } => {
            let idx = (x.raw() - x.format().raw_min()) as usize;
            fixed[idx.min(fixed.len() - 1)]
        }
    }
}

/// 1 below `c`, `(d - x) * recip` between `c` and `d`, 0 above `d`.
fn falling_ramp(
    x: FixedValue,
    c: Breakpoint,
    d: Breakpoint,
    recip: FixedValue,
    grade_fmt: FixedFormat,
    mode: RoundingMode,
) -> FixedValue {
    if cmp_aligned(x, d.fixed).is_gt() {
        return FixedValue::zero(grade_fmt);
    }
    if cmp_aligned(x, c.fixed).is_lt() {
        return FixedValue::max_of(grade_fmt);
    }
    ramp(d.fixed, x, recip, grade_fmt, mode)
}

/// 0 below `e`, `(x - e) * recip` between `e` and `f`, 1 above `f`.
fn rising_ramp(
    x: FixedValue,
    e: Breakpoint,
    f: Breakpoint,
    recip: FixedValue,
    grade_fmt: FixedFormat,
    mode: RoundingMode,
) -> FixedValue {
    if cmp_aligned(x, e.fixed).is_lt() {
        return FixedValue::zero(grade_fmt);
    }
    if cmp_aligned(x, f.fixed).is_gt() {
        return FixedValue::max_of(grade_fmt);
    }
    ramp(x, e.fixed, recip, grade_fmt, mode)
}

/// `(hi - lo) * recip`, saturated into the grade format. The subtraction is
/// a wide exact node (fractional parts aligned, no bits dropped); the single
/// quantization happens after the reciprocal multiply.
fn ramp(
    hi: FixedValue,
    lo: FixedValue,
    recip: FixedValue,
    grade_fmt: FixedFormat,
    mode: RoundingMode,
) -> FixedValue {
    let fa = hi.format().frac_bits();
    let fb = lo.format().frac_bits();
    let frac = fa.max(fb);
    let diff = (hi.raw() << (frac - fa)) - (lo.raw() << (frac - fb));
    let product = diff * recip.raw();
    let shift = (frac + recip.format().frac_bits()) as i32 - grade_fmt.frac_bits() as i32;
    debug_assert!(shift >= 0);
    let raw =
        shift_round(product, shift as u32, mode).clamp(grade_fmt.raw_min(), grade_fmt.raw_max());
    FixedValue::from_raw(raw, grade_fmt).expect("clamped into range")
}

/// Compares two fixed-point values exactly by aligning fractional parts.
fn cmp_aligned(a: FixedValue, b: FixedValue) -> std::cmp::Ordering {
    let fa = a.format().frac_bits();
    let fb = b.format().frac_bits();
    let frac = fa.max(fb);
    (a.raw() << (frac - fa)).cmp(&(b.raw() << (frac - fb)))
}
