//! Uniform check-result structure, aggregation and JSON output.
//!
//! Serialization is hand-rolled so the output is byte-stable across runs:
//! fixed field order, residuals printed with 17 significant digits
//! (lossless for f64). Parsing goes through serde for the round-trip.

use serde::Deserialize;

use crate::tensor::PointResidual;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Skipped,
    Indeterminate,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Skipped => "skipped",
            Verdict::Indeterminate => "indeterminate",
        }
    }
}

/// One named residual check.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct CheckReport {
    pub check_name: String,
    /// The identity being verified, in plain formula text.
    pub reference: String,
    pub points_used: usize,
    /// Scaled residual: raw max-norm divided by `scale`.
    pub max_residual: f64,
    pub tolerance: f64,
    /// Normalization denominator (`1 + max input magnitude`) at the worst
    /// point, so the absolute residual is recoverable.
    pub scale: f64,
    pub verdict: Verdict,
    pub notes: String,
}

impl CheckReport {
    /// Pass/fail report from a scaled residual.
    pub fn from_residual(
        check_name: impl Into<String>,
        reference: impl Into<String>,
        points_used: usize,
        max_residual: f64,
        tolerance: f64,
        scale: f64,
        notes: impl Into<String>,
    ) -> CheckReport {
        // Non-finite residuals are reported as hard failures with the value
        // clamped so the JSON stays parseable.
        let (max_residual, notes) = if max_residual.is_finite() {
            (max_residual, notes.into())
        } else {
            let mut n = notes.into();
            if !n.is_empty() {
                n.push_str("; ");
            }
            n.push_str("residual was non-finite");
            (f64::MAX, n)
        };
        let verdict = if max_residual < tolerance {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        CheckReport {
            check_name: check_name.into(),
            reference: reference.into(),
            points_used,
            max_residual,
            tolerance,
            scale,
            verdict,
            notes,
        }
    }

    pub fn skipped(
        check_name: impl Into<String>,
        reference: impl Into<String>,
        notes: impl Into<String>,
    ) -> CheckReport {
        CheckReport {
            check_name: check_name.into(),
            reference: reference.into(),
            points_used: 0,
            max_residual: 0.0,
            tolerance: 0.0,
            scale: 1.0,
            verdict: Verdict::Skipped,
            notes: notes.into(),
        }
    }

    pub fn indeterminate(
        check_name: impl Into<String>,
        reference: impl Into<String>,
        points_used: usize,
        notes: impl Into<String>,
    ) -> CheckReport {
        CheckReport {
            check_name: check_name.into(),
            reference: reference.into(),
            points_used,
            max_residual: 0.0,
            tolerance: 0.0,
            scale: 1.0,
            verdict: Verdict::Indeterminate,
            notes: notes.into(),
        }
    }
}

/// Folds per-point residuals into a report: the worst scaled residual wins
/// and its scale is the one reported.
pub fn report_from_points(
    check_name: impl Into<String>,
    reference: impl Into<String>,
    tolerance: f64,
    residuals: &[PointResidual],
    notes: impl Into<String>,
) -> CheckReport {
    let mut max_scaled = 0.0f64;
    let mut scale_at_max = 1.0f64;
    let mut bad = false;
    for r in residuals {
        let s = r.scaled();
        if !s.is_finite() {
            bad = true;
            continue;
        }
        if s > max_scaled {
            max_scaled = s;
            scale_at_max = r.scale;
        }
    }
    let residual = if bad { f64::NAN } else { max_scaled };
    CheckReport::from_residual(
        check_name,
        reference,
        residuals.len(),
        residual,
        tolerance,
        scale_at_max,
        notes,
    )
}

/// Aggregated run: checks in deterministic (name) order plus the suite verdict.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(from = "SuiteReportWire")]
pub struct SuiteReport {
    pub checks: Vec<CheckReport>,
    pub verdict: Verdict,
    pub passed: usize,
    pub failed: usize,
    pub skipped: usize,
    pub indeterminate: usize,
}

#[derive(Deserialize)]
struct SuiteReportWire {
    checks: Vec<CheckReport>,
    #[allow(dead_code)]
    verdict: Verdict,
}

impl From<SuiteReportWire> for SuiteReport {
    fn from(wire: SuiteReportWire) -> Self {
        aggregate(wire.checks)
    }
}

/// Sorts by check name and derives the suite verdict: pass iff every
/// non-skipped, non-indeterminate check passes.
pub fn aggregate(mut checks: Vec<CheckReport>) -> SuiteReport {
    checks.sort_by(|a, b| a.check_name.cmp(&b.check_name));
    let mut passed = 0;
    let mut failed = 0;
    let mut skipped = 0;
    let mut indeterminate = 0;
    for c in &checks {
        match c.verdict {
            Verdict::Pass => passed += 1,
            Verdict::Fail => failed += 1,
            Verdict::Skipped => skipped += 1,
            Verdict::Indeterminate => indeterminate += 1,
        }
    }
    let verdict = if failed == 0 { Verdict::Pass } else { Verdict::Fail };
    SuiteReport {
        checks,
        verdict,
        passed,
        failed,
        skipped,
        indeterminate,
    }
}

fn escape_json(s: &str, out: &mut String) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => {
                out.push_str(&format!("\\u{:04x}", c as u32));
            }
            c => out.push(c),
        }
    }
    out.push('"');
}

/// 17 significant digits: lossless and byte-stable for any finite f64.
fn format_f64(v: f64, out: &mut String) {
    out.push_str(&format!("{v:.16e}"));
}

/// Stable-order JSON serialization of a suite report.
pub fn to_json(suite: &SuiteReport) -> String {
    let mut out = String::new();
    out.push_str("{\"checks\": [");
    for (i, c) in suite.checks.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str("{\"check_name\": ");
        escape_json(&c.check_name, &mut out);
        out.push_str(", \"reference\": ");
        escape_json(&c.reference, &mut out);
        out.push_str(&format!(", \"points_used\": {}", c.points_used));
        out.push_str(", \"max_residual\": ");
        format_f64(c.max_residual, &mut out);
        out.push_str(", \"tolerance\": ");
        format_f64(c.tolerance, &mut out);
        out.push_str(", \"scale\": ");
        format_f64(c.scale, &mut out);
        out.push_str(&format!(", \"verdict\": \"{}\"", c.verdict.as_str()));
        out.push_str(", \"notes\": ");
        escape_json(&c.notes, &mut out);
        out.push('}');
    }
    out.push_str(&format!("], \"verdict\": \"{}\"}}", suite.verdict.as_str()));
    out
}

/// Parses a report produced by [`to_json`].
pub fn from_json(text: &str) -> Result<SuiteReport, serde_json::Error> {
    serde_json::from_str(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(name: &str, residual: f64, tol: f64) -> CheckReport {
        CheckReport::from_residual(name, "lhs = rhs", 4, residual, tol, 2.0, "")
    }

    #[test]
    fn empty_suite_serializes_to_the_pinned_bytes() {
        let suite = aggregate(Vec::new());
        assert_eq!(to_json(&suite), "{\"checks\": [], \"verdict\": \"pass\"}");
    }

    #[test]
    fn aggregate_verdicts() {
        let s = aggregate(vec![sample("a", 0.0, 1e-8), sample("b", 1e-3, 1e-8)]);
        assert_eq!(s.verdict, Verdict::Fail);
        assert_eq!((s.passed, s.failed), (1, 1));

        let s = aggregate(vec![
            sample("a", 0.0, 1e-8),
            CheckReport::skipped("b", "r", "not applicable"),
        ]);
        assert_eq!(s.verdict, Verdict::Pass);
        assert_eq!(s.skipped, 1);
    }

    #[test]
    fn checks_sorted_by_name() {
        let s = aggregate(vec![sample("z", 0.0, 1e-8), sample("a", 0.0, 1e-8)]);
        assert_eq!(s.checks[0].check_name, "a");
        assert_eq!(s.checks[1].check_name, "z");
    }

    #[test]
    fn json_roundtrip_is_lossless() {
        let suite = aggregate(vec![
            sample("geometry/x", 1.234567890123456e-12, 1e-8),
            sample("contact/\"quoted\"\nname", f64::MIN_POSITIVE, 1e-7),
            CheckReport::indeterminate("fit/mu", "mu term", 3, "h vanished"),
        ]);
        let text = to_json(&suite);
        let parsed = from_json(&text).unwrap();
        assert_eq!(parsed, suite);
        // And serializing again is byte-identical.
        assert_eq!(to_json(&parsed), text);
    }

    #[test]
    fn reference_string_survives_verbatim() {
        let suite = aggregate(vec![CheckReport::from_residual(
            "one",
            "K(E,F) = [nabla_E, nabla_F] - nabla_[E,F]",
            1,
            0.0,
            1e-8,
            1.0,
            "",
        )]);
        let text = to_json(&suite);
        assert!(text.contains("K(E,F) = [nabla_E, nabla_F] - nabla_[E,F]"));
    }

    #[test]
    fn non_finite_residual_fails_closed() {
        let c = CheckReport::from_residual("bad", "r", 1, f64::NAN, 1e-8, 1.0, "");
        assert_eq!(c.verdict, Verdict::Fail);
        assert!(c.max_residual.is_finite());
        let text = to_json(&aggregate(vec![c]));
        assert!(from_json(&text).is_ok());
    }
}
