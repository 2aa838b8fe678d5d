use std::fmt;
use std::io::{self, Write};
use std::path::Path;
use std::str::FromStr;

use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{Signed, Zero};

use super::ScenarioError;
use crate::metrics::MetricsReport;
use crate::policies::PolicyLabel;

pub const REPORT_HEADER: &str = "policy,cmax,tmax,sum_c,sum_t,sum_wc,sum_wt,messages,idle_ticks";
const CLAMPED_SUFFIX: &str = ",tmax0,sum_t0,sum_wt0";

/// Which tardiness figures go into the tardiness columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TardinessMode {
    /// Signed per-patient tardiness, exact header.
    #[default]
    Literal,
    /// Tardiness floored at zero, same header.
    Clamped,
    /// Literal columns plus `tmax0,sum_t0,sum_wt0`.
    Both,
}

impl FromStr for TardinessMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "literal" => Ok(TardinessMode::Literal),
            "clamped" => Ok(TardinessMode::Clamped),
            "both" => Ok(TardinessMode::Both),
            other => Err(format!(
                "unknown tardiness mode `{other}` (literal, clamped or both)"
            )),
        }
    }
}

impl fmt::Display for TardinessMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TardinessMode::Literal => "literal",
            TardinessMode::Clamped => "clamped",
            TardinessMode::Both => "both",
        })
    }
}

/// One report line. Values are exact so that means over seeds stay exact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportRow {
    pub policy: PolicyLabel,
    pub label: String,
    pub cmax: Ratio<i128>,
    pub tmax: Ratio<i128>,
    pub sum_c: Ratio<i128>,
    pub sum_t: Ratio<i128>,
    pub sum_wc: Ratio<i128>,
    pub sum_wt: Ratio<i128>,
    pub messages: Ratio<i128>,
    pub idle_ticks: Ratio<i128>,
    pub tmax0: Ratio<i128>,
    pub sum_t0: Ratio<i128>,
    pub sum_wt0: Ratio<i128>,
}

fn int(v: impl Into<i128>) -> Ratio<i128> {
    Ratio::from_integer(v.into())
}

impl ReportRow {
    pub fn from_report(policy: PolicyLabel, label: impl Into<String>, r: &MetricsReport) -> Self {
        ReportRow {
            policy,
            label: label.into(),
            cmax: int(r.cmax),
            tmax: int(r.tmax),
            sum_c: int(r.sum_completion),
            sum_t: int(r.sum_tardiness),
            sum_wc: r.sum_weighted_completion,
            sum_wt: r.sum_weighted_tardiness,
            messages: int(r.message_count),
            idle_ticks: int(r.idle_ticks),
            tmax0: int(r.clamped.tmax),
            sum_t0: int(r.clamped.sum_tardiness),
            sum_wt0: r.clamped.sum_weighted_tardiness,
        }
    }

    /// Column-wise arithmetic mean. `rows` must be non-empty.
    pub fn mean(policy: PolicyLabel, label: impl Into<String>, rows: &[ReportRow]) -> Self {
        assert!(!rows.is_empty(), "mean of no rows");
        let n = int(rows.len() as i128);
        let avg = |f: fn(&ReportRow) -> Ratio<i128>| {
            rows.iter().map(f).fold(Ratio::zero(), |a, b| a + b) / n
        };
        ReportRow {
            policy,
            label: label.into(),
            cmax: avg(|r| r.cmax),
            tmax: avg(|r| r.tmax),
            sum_c: avg(|r| r.sum_c),
            sum_t: avg(|r| r.sum_t),
            sum_wc: avg(|r| r.sum_wc),
            sum_wt: avg(|r| r.sum_wt),
            messages: avg(|r| r.messages),
            idle_ticks: avg(|r| r.idle_ticks),
            tmax0: avg(|r| r.tmax0),
            sum_t0: avg(|r| r.sum_t0),
            sum_wt0: avg(|r| r.sum_wt0),
        }
    }

    /// `(column name, value)` pairs in report order for the given mode.
    pub fn columns(&self, mode: TardinessMode) -> Vec<(&'static str, Ratio<i128>)> {
        let (tmax, sum_t, sum_wt) = match mode {
            TardinessMode::Clamped => (self.tmax0, self.sum_t0, self.sum_wt0),
            TardinessMode::Literal | TardinessMode::Both => (self.tmax, self.sum_t, self.sum_wt),
        };
        let mut cols = vec![
            ("cmax", self.cmax),
            ("tmax", tmax),
            ("sum_c", self.sum_c),
            ("sum_t", sum_t),
            ("sum_wc", self.sum_wc),
            ("sum_wt", sum_wt),
            ("messages", self.messages),
            ("idle_ticks", self.idle_ticks),
        ];
        if mode == TardinessMode::Both {
            cols.extend([
                ("tmax0", self.tmax0),
                ("sum_t0", self.sum_t0),
                ("sum_wt0", self.sum_wt0),
            ]);
        }
        cols
    }
}

/// Exact integers print as-is; other values print with at most six
/// decimals (half away from zero), trailing zeros trimmed.
pub fn render_decimal(value: Ratio<i128>) -> String {
    if value.is_integer() {
        return value.to_integer().to_string();
    }
    const SCALE: i128 = 1_000_000;
    let negative = value.is_negative();
    let abs = value.abs();
    let (numer, denom) = (*abs.numer(), *abs.denom());
    let scaled = (numer * SCALE * 2 + denom) / (denom * 2);
    let (whole, frac) = scaled.div_rem(&SCALE);
    let mut text = format!("{whole}.{frac:06}");
    while text.ends_with('0') {
        text.pop();
    }
    if text.ends_with('.') {
        text.pop();
    }
    if negative && text != "0" {
        text.insert(0, '-');
    }
    text
}

/// Writes the comparison CSV. Rows are emitted in policy order
/// (FCFS, WSPT, DOPS, DOPSG), keeping input order within a policy.
pub fn write_report_to<W: Write>(
    rows: &[ReportRow],
    mut out: W,
    mode: TardinessMode,
) -> io::Result<()> {
    let mut ordered: Vec<&ReportRow> = rows.iter().collect();
    ordered.sort_by_key(|r| r.policy);
    let mut text = String::from(REPORT_HEADER);
    if mode == TardinessMode::Both {
        text.push_str(CLAMPED_SUFFIX);
    }
    text.push('\n');
    for row in ordered {
        text.push_str(&row.label);
        for (_, value) in row.columns(mode) {
            text.push(',');
            text.push_str(&render_decimal(value));
        }
        text.push('\n');
    }
    out.write_all(text.as_bytes())
}

pub fn write_report(
    rows: &[ReportRow],
    path: impl AsRef<Path>,
    mode: TardinessMode,
) -> Result<(), ScenarioError> {
    let path = path.as_ref();
    let io_err = |source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    };
    if rows.is_empty() {
        return Err(io_err(io::Error::new(
            io::ErrorKind::InvalidInput,
            "no report rows",
        )));
    }
    let mut buf = Vec::new();
    write_report_to(rows, &mut buf, mode).map_err(io_err)?;
    std::fs::write(path, buf).map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(policy: PolicyLabel, scale: i128) -> ReportRow {
        let mut r = ReportRow::from_report(policy, policy.as_str(), &MetricsReport::empty());
        r.cmax = int(scale);
        r.sum_wt = Ratio::new(scale, 3);
        r
    }

    #[test]
    fn zero_report_is_one_row_of_zeros() {
        let r = ReportRow::from_report(PolicyLabel::Fcfs, "FCFS", &MetricsReport::empty());
        let mut buf = Vec::new();
        write_report_to(&[r], &mut buf, TardinessMode::Literal).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            format!("{REPORT_HEADER}\nFCFS,0,0,0,0,0,0,0,0\n")
        );
    }

    #[test]
    fn rows_follow_policy_order() {
        let rows: Vec<ReportRow> = [
            PolicyLabel::Dopsg,
            PolicyLabel::Fcfs,
            PolicyLabel::Dops,
            PolicyLabel::Wspt,
        ]
        .into_iter()
        .map(|p| row(p, 1))
        .collect();
        let mut buf = Vec::new();
        write_report_to(&rows, &mut buf, TardinessMode::Literal).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let labels: Vec<&str> = text
            .lines()
            .skip(1)
            .map(|l| l.split(',').next().unwrap())
            .collect();
        assert_eq!(labels, vec!["FCFS", "WSPT", "DOPS", "DOPSG"]);
        assert!(!text.contains('\r'));
    }

    #[test]
    fn same_input_same_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![row(PolicyLabel::Wspt, 7), row(PolicyLabel::Dopsg, 5)];
        let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
        write_report(&rows, &a, TardinessMode::Both).unwrap();
        write_report(&rows, &b, TardinessMode::Both).unwrap();
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    }

    #[test]
    fn both_mode_appends_clamped_columns() {
        let mut buf = Vec::new();
        write_report_to(&[row(PolicyLabel::Dops, 2)], &mut buf, TardinessMode::Both).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(&format!("{REPORT_HEADER},tmax0,sum_t0,sum_wt0\n")));
        assert_eq!(text.lines().nth(1).unwrap().split(',').count(), 12);
    }

    #[test]
    fn empty_report_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        assert!(write_report(&[], dir.path().join("x.csv"), TardinessMode::Literal).is_err());
    }

    #[test]
    fn decimals() {
        assert_eq!(render_decimal(Ratio::from_integer(-12)), "-12");
        assert_eq!(render_decimal(Ratio::new(1, 3)), "0.333333");
        assert_eq!(render_decimal(Ratio::new(2, 3)), "0.666667");
        assert_eq!(render_decimal(Ratio::new(-5, 2)), "-2.5");
        assert_eq!(render_decimal(Ratio::new(1, 8)), "0.125");
        assert_eq!(render_decimal(Ratio::new(-1, 10_000_000)), "0");
        assert_eq!(render_decimal(Ratio::new(19_999_999, 10_000_000)), "2");
    }

    #[test]
    fn mean_is_exact() {
        let rows = vec![row(PolicyLabel::Fcfs, 1), row(PolicyLabel::Fcfs, 2)];
        let m = ReportRow::mean(PolicyLabel::Fcfs, "FCFS mean(2 seeds)", &rows);
        assert_eq!(m.cmax, Ratio::new(3, 2));
        assert_eq!(m.sum_wt, Ratio::new(1, 2));
    }
}
