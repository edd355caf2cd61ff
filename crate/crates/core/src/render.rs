//! Human- and machine-readable views of a [`ClassificationReport`].

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::classifier::{ClassificationReport, EventRecord, Label, Origin};
use crate::error::Result;
use crate::trace::{SymbolId, SymbolTable};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Text,
    Json,
    Svg,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "text" => Ok(Format::Text),
            "json" => Ok(Format::Json),
            "svg" => Ok(Format::Svg),
            other => Err(format!("unknown format `{other}` (expected text, json or svg)")),
        }
    }
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Text => "txt",
            Format::Json => "json",
            Format::Svg => "svg",
        }
    }
}

pub fn render(report: &ClassificationReport, table: &SymbolTable, format: Format) -> Result<String> {
    match format {
        Format::Text => Ok(render_text(report, table)),
        Format::Json => render_json(report),
        Format::Svg => Ok(render_svg(report, table)),
    }
}

/// Two-character line marker of a record.
pub fn marker(record: &EventRecord) -> &'static str {
    match (record.label, record.origin) {
        (Label::Common, _) => "= ",
        (Label::Spurious, _) => "+!",
        (Label::Missing, _) => "-!",
        (Label::NonAnomalous, Origin::Injected) => "+?",
        (Label::NonAnomalous, Origin::Reference) => "-?",
    }
}

/// Aligned two-column diff: injected trace on the left, reference on the
/// right. Lines starting with `#` are header and summary.
pub fn render_text(report: &ClassificationReport, table: &SymbolTable) -> String {
    let cell = |pos: usize, sym: SymbolId| format!("[{pos:>4}] {}", table.name(sym));
    let rows: Vec<(&EventRecord, String, String)> = report
        .records
        .iter()
        .map(|r| {
            let (left, right) = match (r.origin, r.counterpart) {
                (Origin::Injected, Some(j)) => (cell(r.position, r.symbol), cell(j, r.symbol)),
                (Origin::Injected, None) => (cell(r.position, r.symbol), String::new()),
                (Origin::Reference, _) => (String::new(), cell(r.position, r.symbol)),
            };
            (r, left, right)
        })
        .collect();
    let lw = rows.iter().map(|(_, l, _)| l.chars().count()).max().unwrap_or(0);
    let rw = rows.iter().map(|(_, _, r)| r.chars().count()).max().unwrap_or(0);

    let mut out = String::new();
    let _ = writeln!(
        out,
        "# experiment {}  reference #{}  mode {}  D {}  eps_spurious {}  eps_missing {}",
        report.experiment,
        report.reference_index,
        report.mode.as_str(),
        report.order,
        report.thresholds.eps_spurious,
        report.thresholds.eps_missing,
    );
    for (r, left, right) in &rows {
        let mut line = format!("{} {left:<lw$} | {right:<rw$}", marker(r));
        if let Some(p) = r.probability {
            let _ = write!(line, "  p={p:.4}");
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    let s = &report.summary;
    let _ = writeln!(
        out,
        "# common {}  spurious {}  missing {}  non-anomalous {}",
        s.common,
        s.spurious,
        s.missing,
        s.non_anomalous_injected + s.non_anomalous_reference,
    );
    out
}

pub fn render_json(report: &ClassificationReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn fill(record: &EventRecord) -> &'static str {
    match record.label {
        Label::Common => "#9aa5b1",
        Label::Spurious => "#d7263d",
        Label::Missing => "#f46036",
        Label::NonAnomalous => "#ffffff",
    }
}

/// Timeline with the reference lane on top and the injected lane below.
/// Each diff row is one column; anomalies are colored.
pub fn render_svg(report: &ClassificationReport, table: &SymbolTable) -> String {
    const STEP: usize = 14;
    const LEFT: usize = 110;
    const TOP_Y: usize = 60;
    const BOTTOM_Y: usize = 120;
    let width = LEFT + STEP * report.records.len().max(1) + 20;
    let height = 170;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        out,
        r#"<title>{} (reference #{}, mode {})</title>"#,
        xml_escape(&report.experiment),
        report.reference_index,
        report.mode.as_str()
    );
    let _ = writeln!(
        out,
        r#"<text x="8" y="20" font-weight="bold">{}</text>"#,
        xml_escape(&report.experiment)
    );
    for (y, name) in [(TOP_Y, "fault-free"), (BOTTOM_Y, "fault-injected")] {
        let _ = writeln!(out, r#"<text x="8" y="{}">{name}</text>"#, y + 4);
        let _ = writeln!(
            out,
            r##"<line x1="{LEFT}" y1="{y}" x2="{}" y2="{y}" stroke="#cbd2d9"/>"##,
            width - 10
        );
    }
    for (k, r) in report.records.iter().enumerate() {
        let x = LEFT + STEP / 2 + k * STEP;
        let mut title = format!("{} {}", marker(r).trim_end(), table.name(r.symbol));
        if let Some(p) = r.probability {
            let _ = write!(title, " p={p:.4}");
        }
        let title = xml_escape(&title);
        let stroke = if r.is_anomaly() { "#1f2933" } else { "#7b8794" };
        let lanes: &[usize] = match (r.origin, r.counterpart) {
            (Origin::Injected, Some(_)) => &[TOP_Y, BOTTOM_Y],
            (Origin::Injected, None) => &[BOTTOM_Y],
            (Origin::Reference, _) => &[TOP_Y],
        };
        if lanes.len() == 2 {
            let _ = writeln!(
                out,
                r##"<line x1="{x}" y1="{TOP_Y}" x2="{x}" y2="{BOTTOM_Y}" stroke="#e4e7eb"/>"##
            );
        }
        for &y in lanes {
            let _ = writeln!(
                out,
                r#"<circle cx="{x}" cy="{y}" r="5" fill="{}" stroke="{stroke}"><title>{title}</title></circle>"#,
                fill(r)
            );
        }
    }
    let s = &report.summary;
    let _ = writeln!(
        out,
        r#"<text x="8" y="{}">common {}, spurious {}, missing {}</text>"#,
        height - 12,
        s.common,
        s.spurious,
        s.missing
    );
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{Mode, Summary, Thresholds};
    use crate::trace::CallPair;

    fn record(origin: Origin, position: usize, label: Label, p: Option<f64>) -> EventRecord {
        EventRecord {
            origin,
            position,
            counterpart: (label == Label::Common).then_some(position),
            symbol: SymbolId(position as u32 % 2),
            label,
            probability: p,
            context: p.map(|_| Vec::new()),
        }
    }

    fn report(records: Vec<EventRecord>) -> ClassificationReport {
        let mut summary = Summary::default();
        for r in &records {
            match r.label {
                Label::Common => summary.common += 1,
                Label::Spurious => summary.spurious += 1,
                Label::Missing => summary.missing += 1,
                Label::NonAnomalous => summary.non_anomalous_injected += 1,
            }
        }
        ClassificationReport {
            experiment: "exp <1> & \"q\"".into(),
            reference_index: 0,
            mode: Mode::LcsWithVmm,
            thresholds: Thresholds::default(),
            order: 3,
            records,
            summary,
        }
    }

    fn table() -> SymbolTable {
        let mut t = SymbolTable::new();
        t.register(&CallPair::new("api", "nova<boot>"));
        t.register(&CallPair::new("nova", "glance&get"));
        t
    }

    fn body(text: &str) -> Vec<&str> {
        text.lines().filter(|l| !l.starts_with('#')).collect()
    }

    #[test]
    fn clean_report_has_only_common_lines() {
        let r = report((0..4).map(|i| record(Origin::Injected, i, Label::Common, None)).collect());
        let text = render_text(&r, &table());
        let lines = body(&text);
        assert_eq!(lines.len(), 4);
        assert!(lines.iter().all(|l| l.starts_with("= ")));
    }

    #[test]
    fn markers_are_counted_exactly() {
        let r = report(vec![
            record(Origin::Injected, 0, Label::Common, None),
            record(Origin::Reference, 1, Label::Missing, Some(0.95)),
            record(Origin::Reference, 2, Label::Missing, Some(0.9)),
            record(Origin::Injected, 1, Label::Spurious, Some(0.05)),
            record(Origin::Injected, 2, Label::NonAnomalous, Some(0.5)),
        ]);
        let text = render_text(&r, &table());
        let count = |m: &str| body(&text).iter().filter(|l| l.starts_with(m)).count();
        assert_eq!(count("+!"), 1);
        assert_eq!(count("-!"), 2);
        assert_eq!(count("+?"), 1);
        assert!(text.contains("p=0.0500"));
        assert!(text.contains("api -> nova<boot>"));
    }

    #[test]
    fn columns_line_up() {
        let r = report(vec![
            record(Origin::Injected, 0, Label::Common, None),
            record(Origin::Reference, 1, Label::Missing, Some(0.95)),
            record(Origin::Injected, 1, Label::Spurious, Some(0.05)),
        ]);
        let text = render_text(&r, &table());
        let bars: Vec<usize> = body(&text).iter().map(|l| l.find(" | ").unwrap()).collect();
        assert!(bars.windows(2).all(|w| w[0] == w[1]), "{text}");
    }

    #[test]
    fn json_round_trips() {
        let r = report(vec![record(Origin::Injected, 1, Label::Spurious, Some(0.05))]);
        let back: ClassificationReport = serde_json::from_str(&render_json(&r).unwrap()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn svg_escapes_names() {
        let r = report(vec![
            record(Origin::Injected, 0, Label::Common, None),
            record(Origin::Injected, 1, Label::Spurious, Some(0.05)),
        ]);
        let svg = render_svg(&r, &table());
        assert!(svg.contains("nova&lt;boot&gt;"));
        assert!(svg.contains("exp &lt;1&gt; &amp; &quot;q&quot;"));
        assert!(!svg.contains("glance&get"));
    }

    #[test]
    fn format_parses() {
        assert_eq!("svg".parse::<Format>(), Ok(Format::Svg));
        assert!("pdf".parse::<Format>().is_err());
    }
}
