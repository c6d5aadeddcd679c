//! The Takagi-Sugeno inference machine: rule evaluation, the weighted
//! numerator / denominator adder trees, the float32 divide, and the two
//! executors (combinational one-shot and four-stage pipeline).
//!
//! Signal widths are derived, never chosen: grades are `uN.N`, each
//! weighted consequent lands in `sH.N` with `H = N + 3` (its magnitude is
//! below 3 because every consequent coefficient and input lies strictly
//! inside (-1, 1)), and the adder trees grow one integer bit per level so
//! that no sum can saturate. With `D = ceil(log2(rule count))` the
//! numerator emerges in `sP.N`, `P = H + D`, and the denominator in
//! `sQ.N`, `Q = N + D + 1`. Both are converted to IEEE 754 single
//! precision, divided, and the quotient is quantized back into `sV.N`.
//!
//! The defuzzified output is the weighted average over the whole rule set;
//! numerator and denominator both sum every rule index, starting at the
//! first rule (index 0).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fixedpoint::{fx_add, fx_min, shift_round, FixedFormat, FixedValue, RoundingMode};
use crate::membership::{MembershipBank, MembershipError};

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("grade vector length {got} does not match the {expected} membership functions")]
    GradeLength { expected: usize, got: usize },
    #[error("rule base needs exactly {expected} rows, got {got}")]
    RuleCount { expected: usize, got: usize },
    #[error("the inference machine needs a two-input bank, got {0} inputs")]
    InputCount(usize),
    #[error("rule ({l}, {k}) is out of range or duplicated")]
    RuleIndex { l: usize, k: usize },
    #[error("rule ({l}, {k}): consequent coefficients must lie strictly inside (-1, 1)")]
    ConsequentRange { l: usize, k: usize },
    #[error("input format {got} does not match the machine's {expected}")]
    InputFormat {
        expected: FixedFormat,
        got: FixedFormat,
    },
    #[error("rule base T = {rules} does not match bank T = {bank}")]
    ConstantWidth { rules: u8, bank: u8 },
    #[error(transparent)]
    Membership(#[from] MembershipError),
}

/// One rule-base file row: rule `(l, k)` with first-order consequent
/// `A*x0 + B*x1 + C`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RuleRow {
    pub l: usize,
    pub k: usize,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

/// A compiled consequent: `s(T+1).T` words next to the real coefficients
/// the reference engine uses.
#[derive(Debug, Clone, Copy)]
pub struct RuleConsequent {
    pub a: FixedValue,
    pub b: FixedValue,
    pub c: FixedValue,
    pub real_a: f64,
    pub real_b: f64,
    pub real_c: f64,
}

/// The full `F0 x F1` rule table, indexed `g = l * F1 + k`.
#[derive(Debug, Clone)]
pub struct RuleBase {
    f0: usize,
    f1: usize,
    t_bits: u8,
    rules: Vec<RuleConsequent>,
}

impl RuleBase {
    /// Quantizes rule rows into `s(T+1).T` consequents. Every `(l, k)` pair
    /// must appear exactly once and every coefficient must lie strictly
    /// inside (-1, 1) (that bound is what makes `H = N + 3` sufficient).
    pub fn compile(
        rows: &[RuleRow],
        f0: usize,
        f1: usize,
        t_bits: u8,
        mode: RoundingMode,
    ) -> Result<Self, InferenceError> {
        let expected = f0 * f1;
        if f0 == 0 || f1 == 0 || rows.len() != expected {
            return Err(InferenceError::RuleCount {
                expected: expected.max(1),
                got: rows.len(),
            });
        }
        let fmt = FixedFormat::s(t_bits + 1, t_bits);
        let mut rules: Vec<Option<RuleConsequent>> = vec![None; expected];
        for row in rows {
            if row.l >= f0 || row.k >= f1 || rules[row.l * f1 + row.k].is_some() {
                return Err(InferenceError::RuleIndex { l: row.l, k: row.k });
            }
            for coeff in [row.a, row.b, row.c] {
                if !(coeff > -1.0 && coeff < 1.0) {
                    return Err(InferenceError::ConsequentRange { l: row.l, k: row.k });
                }
            }
            rules[row.l * f1 + row.k] = Some(RuleConsequent {
                a: FixedValue::quantize(row.a, fmt, mode),
                b: FixedValue::quantize(row.b, fmt, mode),
                c: FixedValue::quantize(row.c, fmt, mode),
                real_a: row.a,
                real_b: row.b,
                real_c: row.c,
            });
        }
        let rules = rules
            .into_iter()
            .map(|r| r.expect("all slots filled"))
            .collect();
        Ok(Self {
            f0,
            f1,
            t_bits,
            rules,
        })
    }

    pub fn f0(&self) -> usize {
        self.f0
    }

    pub fn f1(&self) -> usize {
        self.f1
    }

    pub fn t_bits(&self) -> u8 {
        self.t_bits
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn rule(&self, g: usize) -> &RuleConsequent {
        &self.rules[g]
    }

    pub fn rules(&self) -> &[RuleConsequent] {
        &self.rules
    }

    /// Flat rule index of the pair `(l, k)`.
    pub fn index(&self, l: usize, k: usize) -> usize {
        l * self.f1 + k
    }

    /// The `s(T+1).T` format of the consequent coefficients.
    pub fn consequent_format(&self) -> FixedFormat {
        FixedFormat::s(self.t_bits + 1, self.t_bits)
    }
}

/// Derived signal formats of one inference machine instance. All widths
/// follow from `N` and the rule count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FimFormats {
    n_bits: u8,
    tree_depth: u8,
}

impl FimFormats {
    pub fn derive(n_bits: u8, rule_count: usize) -> Self {
        assert!(rule_count > 0, "rule count must be positive");
        let tree_depth = (rule_count as u32).next_power_of_two().trailing_zeros() as u8;
        Self { n_bits, tree_depth }
    }

    pub fn n_bits(&self) -> u8 {
        self.n_bits
    }

    /// Adder-tree depth `ceil(log2(rule count))`.
    pub fn tree_depth(&self) -> u8 {
        self.tree_depth
    }

    /// `sV.N` with `V = N + 1`: inputs and defuzzified output.
    pub fn input(&self) -> FixedFormat {
        FixedFormat::s(self.n_bits + 1, self.n_bits)
    }

    /// `uN.N`: fuzzified grades and rule strengths.
    pub fn grade(&self) -> FixedFormat {
        FixedFormat::u(self.n_bits, self.n_bits)
    }

    /// `sH.N` with `H = N + 3`: one weighted consequent.
    pub fn weighted(&self) -> FixedFormat {
        FixedFormat::s(self.n_bits + 3, self.n_bits)
    }

    /// `sP.N` with `P = H + tree depth`: the numerator sum.
    pub fn numerator(&self) -> FixedFormat {
        FixedFormat::s(self.n_bits + 3 + self.tree_depth, self.n_bits)
    }

    /// `sQ.N` with `Q = N + tree depth + 1`: the denominator sum.
    pub fn denominator(&self) -> FixedFormat {
        FixedFormat::s(self.n_bits + self.tree_depth + 1, self.n_bits)
    }

    /// Output format, same resolution as the input.
    pub fn output(&self) -> FixedFormat {
        self.input()
    }
}

/// Per-sample status word carried along with the defuzzified output.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FimStatus {
    /// All rule strengths were zero; the output was forced to 0.
    pub div_by_zero: bool,
}

/// Rule strengths `o_g = min(f0[l], f1[k])` in index order `g = l*F1 + k`.
pub fn evaluate_rules(
    f0_grades: &[FixedValue],
    f1_grades: &[FixedValue],
    rules: &RuleBase,
) -> Result<Vec<FixedValue>, InferenceError> {
    let mut out = Vec::new();
    evaluate_rules_into(f0_grades, f1_grades, rules, &mut out)?;
    Ok(out)
}

fn evaluate_rules_into(
    f0_grades: &[FixedValue],
    f1_grades: &[FixedValue],
    rules: &RuleBase,
    out: &mut Vec<FixedValue>,
) -> Result<(), InferenceError> {
    if f0_grades.len() != rules.f0() {
        return Err(InferenceError::GradeLength {
            expected: rules.f0(),
            got: f0_grades.len(),
        });
    }
    if f1_grades.len() != rules.f1() {
        return Err(InferenceError::GradeLength {
            expected: rules.f1(),
            got: f1_grades.len(),
        });
    }
    out.clear();
    for &g0 in f0_grades {
        for &g1 in f1_grades {
            out.push(fx_min(g0, g1).expect("grades share the uN.N format"));
        }
    }
    Ok(())
}

/// The weighted numerator `a = sum o_g * (A_g x0 + B_g x1 + C_g)`.
///
/// Each term is computed exactly in a wide node and quantized once into
/// `sH.N`; the terms are then folded by a binary adder tree that widens one
/// bit per level into `sP.N`. The widths make saturation unreachable, so
/// the tree equals a flat exact sum.
pub fn numerator(
    strengths: &[FixedValue],
    x0: FixedValue,
    x1: FixedValue,
    rules: &RuleBase,
    formats: FimFormats,
    mode: RoundingMode,
) -> Result<FixedValue, InferenceError> {
    if strengths.len() != rules.len() {
        return Err(InferenceError::GradeLength {
            expected: rules.len(),
            got: strengths.len(),
        });
    }
    let mut terms: Vec<FixedValue> = strengths
        .iter()
        .zip(rules.rules())
        .map(|(&o, rule)| weighted_term(o, x0, x1, rule, formats, mode))
        .collect();
    let sum = tree_sum(&mut terms, formats.n_bits());
    Ok(sum
        .cast(formats.numerator())
        .expect("tree width is below P"))
}

/// One `a_g`: the full-precision `o * (A x0 + B x1 + C)` quantized into `sH.N`.
fn weighted_term(
    strength: FixedValue,
    x0: FixedValue,
    x1: FixedValue,
    rule: &RuleConsequent,
    formats: FimFormats,
    mode: RoundingMode,
) -> FixedValue {
    let n = formats.n_bits() as u32;
    let t = rule.a.format().frac_bits() as u32;
    // A*x0 and B*x1 carry N+T fractional bits; align C up to match.
    let linear = rule.a.raw() * x0.raw() + rule.b.raw() * x1.raw() + (rule.c.raw() << n);
    // weighting by o adds N more fractional bits
    let product = strength.raw() * linear;
    let raw = shift_round(product, n + t, mode);
    let fmt = formats.weighted();
    FixedValue::from_raw(raw.clamp(fmt.raw_min(), fmt.raw_max()), fmt).expect("clamped into sH.N")
}

/// The rule-strength sum `b = sum o_g`, folded by the same widening adder
/// tree into `sQ.N`. No bits are dropped anywhere on this path.
pub fn denominator(
    strengths: &[FixedValue],
    formats: FimFormats,
) -> Result<FixedValue, InferenceError> {
    let leaf = FixedFormat::s(formats.n_bits() + 1, formats.n_bits());
    let mut terms: Vec<FixedValue> = strengths
        .iter()
        .map(|o| o.cast(leaf).expect("uN.N fits in s(N+1).N"))
        .collect();
    if terms.is_empty() {
        return Err(InferenceError::GradeLength {
            expected: 1,
            got: 0,
        });
    }
    let sum = tree_sum(&mut terms, formats.n_bits());
    Ok(sum
        .cast(formats.denominator())
        .expect("tree width is below Q"))
}

/// Folds the slice pairwise, widening the sum format by one bit per level.
/// Odd elements pass through unchanged.
fn tree_sum(values: &mut Vec<FixedValue>, frac_bits: u8) -> FixedValue {
    while values.len() > 1 {
        let mut write = 0;
        let mut read = 0;
        while read + 1 < values.len() {
            let (a, b) = (values[read], values[read + 1]);
            let total = a.format().total_bits().max(b.format().total_bits()) + 1;
            let out = FixedFormat::s(total, frac_bits);
            values[write] = fx_add(a, b, out).expect("tree operands share frac bits");
            write += 1;
            read += 2;
        }
        if read < values.len() {
            values[write] = values[read];
            write += 1;
        }
        values.truncate(write);
    }
    values[0]
}

/// The output stage: both sums go to IEEE 754 single precision, the divide
/// runs in f32, and the quotient is quantized back into `sV.N`.
///
/// A zero denominator (possible only when every rule strength is zero)
/// yields 0 with the `div_by_zero` status set: the one actuator-neutral
/// choice.
pub fn defuzzify(
    num: FixedValue,
    den: FixedValue,
    formats: FimFormats,
    mode: RoundingMode,
) -> (FixedValue, FimStatus) {
    if den.raw() == 0 {
        return (
            FixedValue::zero(formats.output()),
            FimStatus { div_by_zero: true },
        );
    }
    let quotient = num.to_f32() / den.to_f32();
    let out = FixedValue::from_f32(quotient, formats.output(), mode)
        .expect("finite over nonzero is never NaN");
    (out, FimStatus::default())
}

/// Scratch buffers reused across inference calls.
#[derive(Debug, Default, Clone)]
pub struct FimScratch {
    f0: Vec<FixedValue>,
    f1: Vec<FixedValue>,
    strengths: Vec<FixedValue>,
}

/// One combinational evaluation: fuzzify, evaluate rules, defuzzify, all
/// within a single sample.
pub fn fim_one_shot(
    x0: FixedValue,
    x1: FixedValue,
    bank: &MembershipBank,
    rules: &RuleBase,
) -> Result<(FixedValue, FimStatus), InferenceError> {
    fim_one_shot_with(&mut FimScratch::default(), x0, x1, bank, rules)
}

/// [`fim_one_shot`] with caller-owned scratch buffers (hot loops).
pub fn fim_one_shot_with(
    scratch: &mut FimScratch,
    x0: FixedValue,
    x1: FixedValue,
    bank: &MembershipBank,
    rules: &RuleBase,
) -> Result<(FixedValue, FimStatus), InferenceError> {
    let formats = check_machine(x0, x1, bank, rules)?;
    bank.fuzzify_into(0, x0, &mut scratch.f0)?;
    bank.fuzzify_into(1, x1, &mut scratch.f1)?;
    evaluate_rules_into(&scratch.f0, &scratch.f1, rules, &mut scratch.strengths)?;
    let num = numerator(&scratch.strengths, x0, x1, rules, formats, bank.rounding())?;
    let den = denominator(&scratch.strengths, formats)?;
    Ok(defuzzify(num, den, formats, bank.rounding()))
}

fn check_machine(
    x0: FixedValue,
    x1: FixedValue,
    bank: &MembershipBank,
    rules: &RuleBase,
) -> Result<FimFormats, InferenceError> {
    if bank.num_inputs() != 2 {
        return Err(InferenceError::InputCount(bank.num_inputs()));
    }
    let formats = FimFormats::derive(bank.n_bits(), rules.len());
    for x in [x0, x1] {
        if x.format() != formats.input() {
            return Err(InferenceError::InputFormat {
                expected: formats.input(),
                got: x.format(),
            });
        }
    }
    if rules.f0() != bank.functions(0).len() || rules.f1() != bank.functions(1).len() {
        return Err(InferenceError::RuleCount {
            expected: bank.functions(0).len() * bank.functions(1).len(),
            got: rules.len(),
        });
    }
    if rules.t_bits() != bank.t_bits() {
        return Err(InferenceError::ConstantWidth {
            rules: rules.t_bits(),
            bank: bank.t_bits(),
        });
    }
    Ok(formats)
}

/// The four register banks of the pipelined machine. Each bank holds one
/// stage's output signals (the input pair is forwarded alongside, since the
/// output stage consumes it three clocks late). All banks reset to zero.
#[derive(Debug, Clone)]
pub struct PipelineState {
    input: (FixedValue, FixedValue),
    mfm: StageMfm,
    om: StageOm,
    ofm: (FixedValue, FimStatus),
}

#[derive(Debug, Clone)]
struct StageMfm {
    f0: Vec<FixedValue>,
    f1: Vec<FixedValue>,
    x: (FixedValue, FixedValue),
}

#[derive(Debug, Clone)]
struct StageOm {
    strengths: Vec<FixedValue>,
    x: (FixedValue, FixedValue),
}

impl PipelineState {
    pub fn new(bank: &MembershipBank, rules: &RuleBase) -> Self {
        let formats = FimFormats::derive(bank.n_bits(), rules.len());
        let zin = FixedValue::zero(formats.input());
        let zgrade = FixedValue::zero(formats.grade());
        Self {
            input: (zin, zin),
            mfm: StageMfm {
                f0: vec![zgrade; bank.functions(0).len()],
                f1: vec![zgrade; bank.functions(1).len()],
                x: (zin, zin),
            },
            om: StageOm {
                strengths: vec![zgrade; rules.len()],
                x: (zin, zin),
            },
            ofm: (FixedValue::zero(formats.output()), FimStatus::default()),
        }
    }

    /// One synchronous clock: every stage computes from the previous
    /// register bank, then all banks load. The returned sample is the
    /// output register as it stood before this edge, so the value emitted
    /// at step `n` corresponds to the input presented at step `n - 4` (the
    /// first four outputs replay the zero-initialized state).
    pub fn step(
        &mut self,
        x0: FixedValue,
        x1: FixedValue,
        bank: &MembershipBank,
        rules: &RuleBase,
    ) -> Result<(FixedValue, FimStatus), InferenceError> {
        let formats = check_machine(x0, x1, bank, rules)?;
        let emitted = self.ofm;

        // OFM stage (from the post-OM bank)
        let num = numerator(
            &self.om.strengths,
            self.om.x.0,
            self.om.x.1,
            rules,
            formats,
            bank.rounding(),
        )?;
        let den = denominator(&self.om.strengths, formats)?;
        let next_ofm = defuzzify(num, den, formats, bank.rounding());

        // OM stage (from the post-MFM bank)
        let mut next_om = StageOm {
            strengths: Vec::new(),
            x: self.mfm.x,
        };
        evaluate_rules_into(&self.mfm.f0, &self.mfm.f1, rules, &mut next_om.strengths)?;

        // MFM stage (from the post-input bank)
        let mut next_mfm = StageMfm {
            f0: Vec::new(),
            f1: Vec::new(),
            x: self.input,
        };
        bank.fuzzify_into(0, self.input.0, &mut next_mfm.f0)?;
        bank.fuzzify_into(1, self.input.1, &mut next_mfm.f1)?;

        self.ofm = next_ofm;
        self.om = next_om;
        self.mfm = next_mfm;
        self.input = (x0, x1);
        Ok(emitted)
    }
}

/// Free-function spelling of [`PipelineState::step`].
pub fn fim_pipeline_step(
    state: &mut PipelineState,
    x0: FixedValue,
    x1: FixedValue,
    bank: &MembershipBank,
    rules: &RuleBase,
) -> Result<(FixedValue, FimStatus), InferenceError> {
    state.step(x0, x1, bank, rules)
}
