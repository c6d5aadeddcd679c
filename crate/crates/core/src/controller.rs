//! The Fuzzy-PI control loop: input processing (error, error difference,
//! gain scaling), the inference machine, and the saturated integrator.
//!
//! Error signals live in `sM.N` where `M = N + ceil(log2(ceil(y_max))) + 1`;
//! the gain outputs are saturated into the machine's `sV.N` inputs, so no
//! gain choice can push the inference inputs outside (-1, 1). Note the
//! signal assignment: `x0` carries the error-difference path through `Kp`,
//! `x1` the error path through `Ki`. The integrator accumulates in `sG.N`
//! with `G = N + ceil(log2(ceil(v_max - v_min))) + 1` and clamps into
//! `[v_min, v_max]` before storing, so the stored command is always a legal
//! actuator value.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fixedpoint::{decompose, fx_sub, shift_round, FixedFormat, FixedValue, RoundingMode};
use crate::inference::{fim_one_shot_with, FimScratch, InferenceError, PipelineState, RuleBase};
use crate::membership::MembershipBank;

#[derive(Debug, Error)]
pub enum ControllerError {
    #[error("invalid controller config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Inference(#[from] InferenceError),
}

/// Which inference executor drives the loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExecMode {
    /// Whole inference within one sample time, zero delay.
    #[default]
    OneShot,
    /// Registered stages; the inference output lags the input by four
    /// samples.
    Pipeline,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    /// Gain on the error difference (the `x0` path).
    pub kp: f64,
    /// Gain on the error (the `x1` path).
    pub ki: f64,
    /// Sample time in seconds.
    pub t_s: f64,
    /// Actuator command clamp, in actuator units.
    pub v_min: f64,
    pub v_max: f64,
    /// Largest magnitude of the (normalized) process variable.
    pub y_max: f64,
    /// Fractional bits of the datapath signals.
    pub n_bits: u8,
    /// Fractional bits of the inference design constants.
    pub t_bits: u8,
    pub mode: ExecMode,
    pub rounding: RoundingMode,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            kp: 2000.0,
            ki: 0.1,
            t_s: 1e-5,
            v_min: -3.0,
            v_max: 3.0,
            y_max: 1.0,
            n_bits: 12,
            t_bits: 10,
            mode: ExecMode::OneShot,
            rounding: RoundingMode::NearestEven,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<(), ControllerError> {
        let fail = |msg: &str| Err(ControllerError::BadConfig(msg.to_string()));
        let finite = [
            self.kp, self.ki, self.t_s, self.v_min, self.v_max, self.y_max,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return fail("gains, bounds and t_s must be finite");
        }
        if self.v_min >= self.v_max {
            return fail("v_min must be below v_max");
        }
        if self.kp <= 0.0 || self.ki <= 0.0 {
            return fail("Kp and Ki must be positive");
        }
        if self.t_s <= 0.0 {
            return fail("t_s must be positive");
        }
        if self.y_max <= 0.0 {
            return fail("y_max must be positive");
        }
        if !(4..=32).contains(&self.n_bits) {
            return fail("N must lie in [4, 32]");
        }
        if !(2..=16).contains(&self.t_bits) {
            return fail("T must lie in [2, 16]");
        }
        Ok(())
    }

    /// `sM.N` with `M = N + ceil(log2(ceil(y_max))) + 1`.
    pub fn error_format(&self) -> FixedFormat {
        FixedFormat::s(self.n_bits + ceil_log2(self.y_max) + 1, self.n_bits)
    }

    /// The machine input format `sV.N`, `V = N + 1`.
    pub fn input_format(&self) -> FixedFormat {
        FixedFormat::s(self.n_bits + 1, self.n_bits)
    }

    /// `sG.N` with `G = N + ceil(log2(ceil(v_max - v_min))) + 1`.
    pub fn accumulator_format(&self) -> FixedFormat {
        FixedFormat::s(
            self.n_bits + ceil_log2(self.v_max - self.v_min) + 1,
            self.n_bits,
        )
    }
}

/// `ceil(log2(ceil(x)))` for positive `x`, the integer-bit budget formulas.
fn ceil_log2(x: f64) -> u8 {
    let ceiling = x.ceil().max(1.0) as u64;
    ceiling.next_power_of_two().trailing_zeros() as u8
}

/// Any saturation or fault the loop noticed during one step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepFlags {
    /// `|y|` or `|y_sp|` exceeded `y_max`; the error was saturated.
    pub input_overrange: bool,
    /// The inference machine divided by a zero rule-strength sum.
    pub div_by_zero: bool,
}

/// All signals produced by one controller step, for step logs.
#[derive(Debug, Clone, Copy)]
pub struct StepRecord {
    pub y: f64,
    pub y_sp: f64,
    pub e: FixedValue,
    pub e_d: FixedValue,
    pub x0: FixedValue,
    pub x1: FixedValue,
    pub v_d: FixedValue,
    pub r: FixedValue,
    pub flags: StepFlags,
}

/// One control channel: validated config plus the loop state (previous
/// error, integrator, pipeline registers when pipelined).
#[derive(Debug, Clone)]
pub struct Controller {
    cfg: ControllerConfig,
    prev_error: FixedValue,
    accumulator: FixedValue,
    v_min_fx: FixedValue,
    v_max_fx: FixedValue,
    pipeline: Option<PipelineState>,
    scratch: FimScratch,
    sticky: StepFlags,
}

impl Controller {
    /// Validates the config and resets all state registers to zero. The
    /// clamp bounds are quantized inward (floor above, ceiling below) so the
    /// stored command can never leave the real `[v_min, v_max]`.
    pub fn new(cfg: ControllerConfig) -> Result<Self, ControllerError> {
        cfg.validate()?;
        let acc_fmt = cfg.accumulator_format();
        Ok(Self {
            cfg,
            prev_error: FixedValue::zero(cfg.error_format()),
            accumulator: FixedValue::zero(acc_fmt),
            v_min_fx: quantize_ceil(cfg.v_min, acc_fmt),
            v_max_fx: FixedValue::quantize(cfg.v_max, acc_fmt, RoundingMode::Floor),
            pipeline: None,
            scratch: FimScratch::default(),
            sticky: StepFlags::default(),
        })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.cfg
    }

    /// Flags accumulated since construction (or the last reset).
    pub fn sticky_flags(&self) -> StepFlags {
        self.sticky
    }

    pub fn reset_sticky_flags(&mut self) {
        self.sticky = StepFlags::default();
    }

    /// Current integrator output in actuator units.
    pub fn command(&self) -> FixedValue {
        self.accumulator
    }

    /// Input processing: error, error difference, gain scaling.
    ///
    /// `e = y_sp - y` is quantized into `sM.N`; `e_d = e - e(n-1)` saturates
    /// in the same format. The gains multiply the fixed error exactly (the
    /// f64 gain is an exact dyadic rational) and the products are quantized
    /// and saturated into `sV.N`.
    pub fn ipm_step(&mut self, y: f64, y_sp: f64) -> (FixedValue, FixedValue, StepRecord) {
        let cfg = &self.cfg;
        let overrange = y.abs() > cfg.y_max || y_sp.abs() > cfg.y_max;
        let e_fmt = cfg.error_format();
        let e = FixedValue::quantize(y_sp - y, e_fmt, cfg.rounding);
        let e_d = fx_sub(e, self.prev_error, e_fmt).expect("error formats match");
        self.prev_error = e;

        let x_fmt = cfg.input_format();
        let x0 = gain_mul(cfg.kp, e_d, x_fmt, cfg.rounding);
        let x1 = gain_mul(cfg.ki, e, x_fmt, cfg.rounding);

        let flags = StepFlags {
            input_overrange: overrange,
            div_by_zero: false,
        };
        let record = StepRecord {
            y,
            y_sp,
            e,
            e_d,
            x0,
            x1,
            v_d: FixedValue::zero(x_fmt),
            r: self.accumulator,
            flags,
        };
        (x0, x1, record)
    }

    /// Integration: `v <- clamp(v + v_d, v_min, v_max)`, returning the
    /// stored command.
    pub fn im_step(&mut self, v_d: FixedValue) -> FixedValue {
        debug_assert_eq!(
            v_d.format().frac_bits(),
            self.accumulator.format().frac_bits()
        );
        let raw =
            (self.accumulator.raw() + v_d.raw()).clamp(self.v_min_fx.raw(), self.v_max_fx.raw());
        self.accumulator =
            FixedValue::from_raw(raw, self.accumulator.format()).expect("clamped into range");
        self.accumulator
    }

    /// One full loop step: input processing, inference (per the configured
    /// executor), integration. Returns every intermediate signal.
    pub fn step(
        &mut self,
        y: f64,
        y_sp: f64,
        bank: &MembershipBank,
        rules: &RuleBase,
    ) -> Result<StepRecord, ControllerError> {
        let (x0, x1, mut record) = self.ipm_step(y, y_sp);
        let (v_d, status) = match self.cfg.mode {
            ExecMode::OneShot => fim_one_shot_with(&mut self.scratch, x0, x1, bank, rules)?,
            ExecMode::Pipeline => {
                let state = self
                    .pipeline
                    .get_or_insert_with(|| PipelineState::new(bank, rules));
                state.step(x0, x1, bank, rules)?
            }
        };
        let r = self.im_step(v_d);
        record.v_d = v_d;
        record.r = r;
        record.flags.div_by_zero = status.div_by_zero;
        self.sticky.input_overrange |= record.flags.input_overrange;
        self.sticky.div_by_zero |= status.div_by_zero;
        Ok(record)
    }
}

/// Exact gain multiply: the f64 gain decomposes into `mant * 2^exp`, the
/// product `raw * mant` is exact in 128 bits, and a single rounding lands
/// the result in `out`.
fn gain_mul(gain: f64, e: FixedValue, out: FixedFormat, mode: RoundingMode) -> FixedValue {
    let (mant, exp) = decompose(gain);
    let product = e.raw() * mant;
    let shift = exp + out.frac_bits() as i32 - e.format().frac_bits() as i32;
    let raw = if shift >= 0 {
        if shift >= 127 {
            return if product > 0 {
                FixedValue::max_of(out)
            } else if product < 0 {
                FixedValue::min_of(out)
            } else {
                FixedValue::zero(out)
            };
        }
        match product.checked_mul(1i128 << shift) {
            Some(v) => v,
            None => {
                return if product > 0 {
                    FixedValue::max_of(out)
                } else {
                    FixedValue::min_of(out)
                }
            }
        }
    } else {
        shift_round(product, (-shift) as u32, mode)
    };
    FixedValue::from_raw(raw.clamp(out.raw_min(), out.raw_max()), out).expect("clamped")
}

/// Quantize towards +inf (used for the lower clamp bound so the stored
/// command stays at or above the real `v_min`).
fn quantize_ceil(x: f64, fmt: FixedFormat) -> FixedValue {
    let floored = FixedValue::quantize(-x, fmt, RoundingMode::Floor);
    let raw = (-floored.raw()).clamp(fmt.raw_min(), fmt.raw_max());
    FixedValue::from_raw(raw, fmt).expect("clamped")
}
