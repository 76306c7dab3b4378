//! Deterministic SVG plotting for metrics series: one polyline per protocol,
//! axes with units, and a legend. Same input, same bytes.

use crate::error::ScenarioError;
use crate::metrics::MetricsSample;

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 520.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 30.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 55.0;

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

/// Plottable columns of a metrics series.
pub const QUANTITIES: [&str; 6] = [
    "total_residual_j",
    "mean_residual_j",
    "alive_count",
    "records_delivered",
    "elections_held",
    "bytes_on_air",
];

fn column_value(sample: &MetricsSample, quantity: &str) -> f64 {
    match quantity {
        "total_residual_j" => sample.total_residual_j,
        "mean_residual_j" => sample.mean_residual_j,
        "alive_count" => sample.alive_count as f64,
        "records_delivered" => sample.records_delivered as f64,
        "elections_held" => sample.elections_held as f64,
        "bytes_on_air" => sample.bytes_on_air as f64,
        _ => unreachable!("validated"),
    }
}

fn axis_label(quantity: &str) -> &'static str {
    match quantity {
        "total_residual_j" => "total residual energy (J)",
        "mean_residual_j" => "mean residual energy (J)",
        "alive_count" => "alive nodes (count)",
        "records_delivered" => "records delivered (count)",
        "elections_held" => "elections held (count)",
        "bytes_on_air" => "bytes on air (B)",
        _ => unreachable!("validated"),
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.3}")
}

/// Renders the chosen quantity against the round index, one polyline per
/// named series. All series must share the same round indexing.
pub fn emit_plot(
    series_set: &[(String, Vec<MetricsSample>)],
    quantity: &str,
) -> Result<String, ScenarioError> {
    if series_set.is_empty() {
        return Err(ScenarioError::Validation("no series to plot".into()));
    }
    if !QUANTITIES.contains(&quantity) {
        return Err(ScenarioError::Validation(format!(
            "unknown plot quantity {quantity:?}; valid columns: {}",
            QUANTITIES.join(", ")
        )));
    }
    let len = series_set[0].1.len();
    for (name, s) in series_set {
        if s.len() != len {
            return Err(ScenarioError::Validation(format!(
                "series {name:?} has {} rounds, expected {len}",
                s.len()
            )));
        }
    }

    let max_round = series_set[0]
        .1
        .last()
        .map(|s| s.round as f64)
        .unwrap_or(0.0)
        .max(1.0);
    let mut max_v = f64::MIN;
    let mut min_v = f64::MAX;
    for (_, s) in series_set {
        for sample in s {
            let v = column_value(sample, quantity);
            max_v = max_v.max(v);
            min_v = min_v.min(v);
        }
    }
    if series_set[0].1.is_empty() {
        min_v = 0.0;
        max_v = 1.0;
    }
    if min_v > 0.0 {
        min_v = 0.0; // anchor energy-style plots at zero
    }
    if max_v <= min_v {
        max_v = min_v + 1.0;
    }

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let x_of = |round: f64| MARGIN_LEFT + plot_w * round / max_round;
    let y_of = |v: f64| MARGIN_TOP + plot_h * (1.0 - (v - min_v) / (max_v - min_v));

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");

    // frame and gridlines
    svg.push_str(&format!(
        "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#333\" stroke-width=\"1\"/>\n",
        fmt(MARGIN_LEFT), fmt(MARGIN_TOP), fmt(plot_w), fmt(plot_h)
    ));
    for i in 0..=5 {
        let v = min_v + (max_v - min_v) * i as f64 / 5.0;
        let y = y_of(v);
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#ddd\" stroke-width=\"0.5\"/>\n",
            fmt(MARGIN_LEFT), fmt(y), fmt(MARGIN_LEFT + plot_w), fmt(y)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\" fill=\"#333\">{}</text>\n",
            fmt(MARGIN_LEFT - 6.0),
            fmt(y + 4.0),
            fmt(v)
        ));
        let r = max_round * i as f64 / 5.0;
        let x = x_of(r);
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\" fill=\"#333\">{}</text>\n",
            fmt(x),
            fmt(MARGIN_TOP + plot_h + 18.0),
            fmt(r)
        ));
    }

    // axis labels
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\" fill=\"#111\">round</text>\n",
        fmt(MARGIN_LEFT + plot_w / 2.0),
        fmt(HEIGHT - 12.0)
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\" fill=\"#111\" \
         transform=\"rotate(-90 16 {})\">{}</text>\n",
        fmt(MARGIN_TOP + plot_h / 2.0),
        fmt(MARGIN_TOP + plot_h / 2.0),
        axis_label(quantity)
    ));

    // polylines
    for (i, (name, s)) in series_set.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if !s.is_empty() {
            let points: Vec<String> = s
                .iter()
                .map(|sample| {
                    format!(
                        "{},{}",
                        fmt(x_of(sample.round as f64)),
                        fmt(y_of(column_value(sample, quantity)))
                    )
                })
                .collect();
            svg.push_str(&format!(
                "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
                points.join(" ")
            ));
        }
        // legend entry
        let ly = MARGIN_TOP + 8.0 + 18.0 * i as f64;
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            fmt(MARGIN_LEFT + plot_w - 150.0),
            fmt(ly),
            fmt(MARGIN_LEFT + plot_w - 120.0),
            fmt(ly)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"#111\">{}</text>\n",
            fmt(MARGIN_LEFT + plot_w - 112.0),
            fmt(ly + 4.0),
            name
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(n: u32, scale: f64) -> Vec<MetricsSample> {
        (0..n)
            .map(|round| MetricsSample {
                round,
                total_residual_j: scale * (n - round) as f64,
                mean_residual_j: scale * (n - round) as f64 / 10.0,
                alive_count: 10,
                records_delivered: 2,
                elections_held: 0,
                bytes_on_air: 100,
            })
            .collect()
    }

    #[test]
    fn one_series_one_polyline_one_legend_entry() {
        let svg = emit_plot(&[("sidle".into(), series(50, 1.0))], "mean_residual_j").unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert_eq!(svg.matches(">sidle</text>").count(), 1);
        assert!(svg.contains("mean residual energy (J)"));
        assert!(svg.contains(">round</text>"));
    }

    #[test]
    fn three_series_three_polylines() {
        let set = vec![
            ("sidle".to_string(), series(50, 1.0)),
            ("leach".to_string(), series(50, 0.8)),
            ("fca".to_string(), series(50, 0.9)),
        ];
        let svg = emit_plot(&set, "total_residual_j").unwrap();
        assert_eq!(svg.matches("<polyline").count(), 3);
    }

    #[test]
    fn rendering_is_pure() {
        let set = vec![("a".to_string(), series(20, 2.0))];
        assert_eq!(
            emit_plot(&set, "alive_count").unwrap(),
            emit_plot(&set, "alive_count").unwrap()
        );
    }

    #[test]
    fn invalid_quantity_lists_valid_columns() {
        let err = emit_plot(&[("a".into(), series(5, 1.0))], "").unwrap_err();
        let text = err.to_string();
        assert!(text.contains("mean_residual_j"));
        assert!(text.contains("bytes_on_air"));
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        let set = vec![
            ("a".to_string(), series(5, 1.0)),
            ("b".to_string(), series(6, 1.0)),
        ];
        assert!(emit_plot(&set, "alive_count").is_err());
    }
}
