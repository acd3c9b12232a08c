//! Aligned plain-text tables over one or more run reports.

use super::report::{aggregate_gains, RunReport};
use crate::model::StrategyKind;
use crate::suggestibility::ProbeCondition;

enum Row {
    Group(String),
    Cells(Vec<String>),
}

struct TextTable {
    header: Vec<String>,
    rows: Vec<Row>,
}

impl TextTable {
    fn new(header: Vec<String>) -> Self {
        Self {
            header,
            rows: Vec::new(),
        }
    }

    fn group(&mut self, title: impl Into<String>) {
        self.rows.push(Row::Group(title.into()));
    }

    fn cells(&mut self, cells: Vec<String>) {
        self.rows.push(Row::Cells(cells));
    }

    fn render(&self) -> String {
        let columns = self.header.len();
        let mut widths: Vec<usize> = self.header.iter().map(|h| h.chars().count()).collect();
        for row in &self.rows {
            if let Row::Cells(cells) = row {
                for (i, c) in cells.iter().enumerate().take(columns) {
                    widths[i] = widths[i].max(c.chars().count());
                }
            }
        }
        let line = |cells: &[String]| -> String {
            let mut out = String::new();
            for (i, width) in widths.iter().enumerate() {
                let c = cells.get(i).map(String::as_str).unwrap_or("");
                if i == 0 {
                    out.push_str(&format!("{c:<width$}"));
                } else {
                    out.push_str(&format!("  {c:>width$}"));
                }
            }
            out.trim_end().to_string() + "\n"
        };
        let total: usize = widths.iter().sum::<usize>() + 2 * (columns - 1);
        let rule = "-".repeat(total) + "\n";
        let mut out = line(&self.header);
        out.push_str(&rule);
        for row in &self.rows {
            match row {
                Row::Group(title) => out.push_str(&format!("{title}\n")),
                Row::Cells(cells) => out.push_str(&line(cells)),
            }
        }
        out
    }
}

fn pct(value: Option<f64>) -> String {
    value.map_or_else(|| "-".to_string(), |v| format!("{:.1}", v * 100.0))
}

/// `1234567` → `1,234,567`.
pub fn thousands(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

fn model_heading(report: &RunReport) -> String {
    let p = &report.provenance;
    if p.pa_model == p.critic_model {
        format!("PA and CA: {}", p.pa_model)
    } else {
        format!("PA: {} / CA: {}", p.pa_model, p.critic_model)
    }
}

fn all_datasets(reports: &[RunReport]) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    for name in reports.iter().flat_map(|r| r.datasets()) {
        if !names.contains(&name) {
            names.push(name);
        }
    }
    names
}

/// Marks the best value in each column with `*` and the runner-up with `+`.
fn mark_ranks(values: &mut [Vec<Option<f64>>], rendered: &mut [Vec<String>]) {
    let columns = values.first().map_or(0, Vec::len);
    for col in 0..columns {
        let mut distinct: Vec<f64> = values
            .iter()
            .filter_map(|row| row[col].map(|v| (v * 1000.0).round() / 1000.0))
            .collect();
        distinct.sort_by(|a, b| b.total_cmp(a));
        distinct.dedup();
        for (row_values, row_text) in values.iter_mut().zip(rendered.iter_mut()) {
            if let Some(v) = row_values[col].map(|v| (v * 1000.0).round() / 1000.0) {
                if Some(&v) == distinct.first() {
                    row_text[col].push('*');
                } else if Some(&v) == distinct.get(1) {
                    row_text[col].push('+');
                }
            }
        }
    }
}

/// Headline accuracy (percent) per strategy and dataset, one block per report.
pub fn accuracy_table(reports: &[RunReport]) -> String {
    let datasets = all_datasets(reports);
    let mut header = vec!["Model and Experiment".to_string()];
    header.extend(datasets.iter().cloned());
    let mut table = TextTable::new(header);
    for report in reports {
        table.group(model_heading(report));
        let strategies: Vec<StrategyKind> = StrategyKind::ALL
            .into_iter()
            .filter(|s| report.cells.iter().any(|c| c.strategy == *s))
            .collect();
        let mut values: Vec<Vec<Option<f64>>> = strategies
            .iter()
            .map(|s| {
                datasets
                    .iter()
                    .map(|d| report.headline(d, *s).map(|c| c.accuracy))
                    .collect()
            })
            .collect();
        let mut rendered: Vec<Vec<String>> = values.iter().map(|r| r.iter().map(|v| pct(*v)).collect()).collect();
        mark_ranks(&mut values, &mut rendered);
        for (s, cells) in strategies.iter().zip(rendered) {
            let mut row = vec![format!("  {}", s.display_name())];
            row.extend(cells);
            table.cells(row);
        }
    }
    table.render() + "* best, + second best\n"
}

/// Suggestibility S (percent) per probe condition and dataset.
pub fn suggestibility_table(reports: &[RunReport]) -> String {
    let datasets = all_datasets(reports);
    let mut header = vec![String::new()];
    header.extend(datasets.iter().cloned());
    let mut table = TextTable::new(header);
    for report in reports.iter().filter(|r| !r.suggestibility.is_empty()) {
        table.group(report.provenance.pa_model.clone());
        for condition in ProbeCondition::ALL {
            if !report.suggestibility.iter().any(|r| r.condition == condition) {
                continue;
            }
            let mut row = vec![format!("  {condition}")];
            row.extend(
                datasets
                    .iter()
                    .map(|d| pct(report.suggestibility_row(d, condition).map(|r| r.s))),
            );
            table.cells(row);
        }
    }
    table.render()
}

fn fraction_label(f: f64) -> String {
    format!("{}%", (f * 100.0).round())
}

/// Accuracy per training fraction; baselines are fraction-independent.
pub fn fraction_table(report: &RunReport) -> String {
    let datasets = report.datasets();
    let mut header = vec!["Experiment (Training Percentage)".to_string()];
    header.extend(datasets.iter().cloned());
    let mut table = TextTable::new(header);
    let baselines: Vec<StrategyKind> = [StrategyKind::ZeroShot, StrategyKind::EpLabel]
        .into_iter()
        .filter(|s| report.cells.iter().any(|c| c.strategy == *s))
        .collect();
    if !baselines.is_empty() {
        table.group("Baselines");
        for s in baselines {
            let mut row = vec![format!("  {}", s.display_name())];
            row.extend(datasets.iter().map(|d| pct(report.headline(d, s).map(|c| c.accuracy))));
            table.cells(row);
        }
    }
    for s in [StrategyKind::EpCrit, StrategyKind::SemCrit, StrategyKind::EpSemCrit] {
        if !report.cells.iter().any(|c| c.strategy == s) {
            continue;
        }
        table.group(s.display_name());
        let k = s.uses_retrieval().then_some(report.provenance.k);
        let mut values: Vec<Vec<Option<f64>>> = report
            .provenance
            .fractions
            .iter()
            .map(|f| {
                datasets
                    .iter()
                    .map(|d| report.cell(d, s, Some(*f), k).map(|c| c.accuracy))
                    .collect()
            })
            .collect();
        let mut rendered: Vec<Vec<String>> = values.iter().map(|r| r.iter().map(|v| pct(*v)).collect()).collect();
        if values.len() > 1 {
            mark_best_only(&mut values, &mut rendered);
        }
        for (f, cells) in report.provenance.fractions.iter().zip(rendered) {
            let mut row = vec![format!("  {}", fraction_label(*f))];
            row.extend(cells);
            table.cells(row);
        }
    }
    table.render()
}

fn mark_best_only(values: &mut [Vec<Option<f64>>], rendered: &mut [Vec<String>]) {
    mark_ranks(values, rendered);
    for row in rendered.iter_mut() {
        for cell in row.iter_mut() {
            if cell.ends_with('+') {
                cell.pop();
            }
        }
    }
}

/// Retrieval strategies at every evaluated `k` (largest fraction).
pub fn k_table(report: &RunReport) -> String {
    let datasets = report.datasets();
    let mut header = vec!["Model and Experiment".to_string()];
    header.extend(datasets.iter().cloned());
    let mut table = TextTable::new(header);
    let top = report.provenance.fractions.iter().copied().reduce(f64::max);
    for s in StrategyKind::ALL.into_iter().filter(|s| s.uses_retrieval()) {
        let mut ks: Vec<usize> = report
            .cells
            .iter()
            .filter(|c| c.strategy == s)
            .filter_map(|c| c.k)
            .collect();
        ks.sort_unstable();
        ks.dedup();
        if ks.is_empty() {
            continue;
        }
        table.group(s.display_name());
        let fraction = if s.is_baseline() { None } else { top };
        for k in ks {
            let mut row = vec![format!("  K={k}")];
            row.extend(
                datasets
                    .iter()
                    .map(|d| pct(report.cell(d, s, fraction, Some(k)).map(|c| c.accuracy))),
            );
            table.cells(row);
        }
    }
    table.render()
}

/// Average per-dataset training and utilization tokens of the critique strategies.
pub fn token_table(report: &RunReport) -> String {
    let mut table = TextTable::new(vec![
        "Experiment".into(),
        "Average Training Tokens".into(),
        "Average Utilization Tokens".into(),
    ]);
    let datasets = report.datasets();
    for s in [StrategyKind::EpCrit, StrategyKind::SemCrit, StrategyKind::EpSemCrit] {
        let cells: Vec<_> = datasets.iter().filter_map(|d| report.headline(d, s)).collect();
        if cells.is_empty() {
            continue;
        }
        let n = cells.len() as f64;
        let avg = |f: &dyn Fn(&super::report::CellReport) -> u64| {
            thousands((cells.iter().map(|c| f(c) as f64).sum::<f64>() / n).round() as u64)
        };
        table.cells(vec![
            format!("  {}", s.display_name()),
            avg(&|c| c.training_tokens.total()),
            avg(&|c| c.utilization_tokens.total()),
        ]);
    }
    table.render()
}

/// Mean and variance of the best-critique-over-best-baseline gain, one row per report.
pub fn gains_table(reports: &[RunReport]) -> String {
    let mut table = TextTable::new(vec![
        "Model".into(),
        "Average Accuracy Gain".into(),
        "Accuracy Gain Variance".into(),
    ]);
    let mut notes = String::new();
    for report in reports {
        match aggregate_gains(report) {
            Ok(g) => table.cells(vec![
                model_heading(report),
                format!("{:.1}", g.mean),
                format!("{:.1}", g.variance),
            ]),
            Err(e) => notes.push_str(&format!("{}: {e}\n", model_heading(report))),
        }
    }
    table.render() + &notes
}

/// Every table that has data, separated by titled sections.
pub fn render_all(reports: &[RunReport]) -> String {
    let mut sections: Vec<(String, String)> = vec![("Accuracy".into(), accuracy_table(reports))];
    if reports.iter().any(|r| !r.suggestibility.is_empty()) {
        sections.push(("Suggestibility (S x 100)".into(), suggestibility_table(reports)));
    }
    for report in reports {
        let heading = model_heading(report);
        if report.provenance.fractions.len() > 1 {
            sections.push((format!("Training fraction, {heading}"), fraction_table(report)));
        }
        if report
            .cells
            .iter()
            .filter_map(|c| c.k)
            .any(|k| k != report.provenance.k)
        {
            sections.push((format!("Retrieval depth, {heading}"), k_table(report)));
        }
        if report.cells.iter().any(|c| c.strategy.needs_critiques()) {
            sections.push((format!("Token cost, {heading}"), token_table(report)));
        }
    }
    if reports.iter().any(|r| {
        StrategyKind::ALL
            .iter()
            .all(|s| r.cells.iter().any(|c| c.strategy == *s))
    }) {
        sections.push(("Aggregated gain".into(), gains_table(reports)));
    }
    let mut out = String::new();
    for (title, body) in sections {
        out.push_str(&format!("== {title} ==\n{body}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::report::tests::report_with;
    use super::*;

    const DATASETS: [&str; 7] = ["mcr", "nfcorpus", "pubmed", "steam", "book", "anime", "movie"];

    fn columns(rows: [[f64; 7]; 5]) -> Vec<(&'static str, [f64; 5])> {
        DATASETS
            .iter()
            .enumerate()
            .map(|(d, name)| (*name, [rows[0][d], rows[1][d], rows[2][d], rows[3][d], rows[4][d]]))
            .collect()
    }

    #[test]
    fn published_accuracies_give_published_gain_rows() {
        let mini = columns([
            [56.8, 85.6, 62.4, 52.8, 52.0, 47.9, 49.9],
            [65.2, 84.4, 63.2, 57.6, 55.2, 51.1, 53.2],
            [65.2, 83.6, 62.0, 62.7, 53.8, 54.4, 57.7],
            [58.4, 87.2, 59.6, 60.1, 45.5, 48.8, 58.7],
            [56.8, 85.2, 61.6, 62.4, 54.2, 61.7, 59.3],
        ]);
        let o4 = columns([
            [87.6, 89.2, 62.0, 50.4, 49.3, 51.1, 51.6],
            [90.0, 91.6, 66.8, 60.0, 49.7, 63.9, 59.3],
            [80.8, 89.2, 64.8, 60.6, 50.5, 68.1, 60.7],
            [69.6, 88.8, 60.4, 48.0, 48.2, 48.9, 50.9],
            [90.4, 90.8, 61.5, 61.5, 52.4, 68.3, 57.6],
        ]);
        // Independent oracle: gains by hand, then mean and population variance.
        let oracle = |cols: &[(&str, [f64; 5])]| {
            let gains: Vec<f64> = cols
                .iter()
                .map(|(_, a)| a[2].max(a[3]).max(a[4]) - a[0].max(a[1]))
                .collect();
            let mean = gains.iter().sum::<f64>() / 7.0;
            (mean, gains.iter().map(|g| (g - mean) * (g - mean)).sum::<f64>() / 7.0)
        };
        for (cols, expected) in [(mini, "3.0  16.6"), (o4, "1.1  3.9")] {
            let report = report_with(&cols);
            let table = aggregate_gains(&report).unwrap();
            let (mean, variance) = oracle(&cols);
            assert!((table.mean - mean).abs() < 1e-9 && (table.variance - variance).abs() < 1e-9);
            let rendered = gains_table(&[report]);
            let row = rendered.lines().nth(2).unwrap();
            let numbers: Vec<&str> = row.split_whitespace().rev().take(2).collect();
            assert_eq!(format!("{}  {}", numbers[1], numbers[0]), expected, "{rendered}");
        }
    }

    #[test]
    fn thousands_separators() {
        assert_eq!(thousands(0), "0");
        assert_eq!(thousands(999), "999");
        assert_eq!(thousands(142517), "142,517");
        assert_eq!(thousands(1234567), "1,234,567");
    }

    #[test]
    fn accuracy_table_marks_ranks() {
        let report = report_with(&[("t", [52.0, 56.0, 60.0, 55.0, 58.0])]);
        let text = accuracy_table(&[report]);
        assert!(
            text.contains("EP_CRIT") && text.contains("60.0*") && text.contains("58.0+"),
            "{text}"
        );
        assert!(text.lines().next().unwrap().starts_with("Model and Experiment"));
    }
}
