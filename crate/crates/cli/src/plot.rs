//! SVG rendering of reward curves and final-evaluation bar charts.

use std::path::Path;

use oran_core::harness::eval::EvalSummary;
use oran_core::harness::report::Curve;
use plotters::prelude::*;

const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(255, 127, 14),
    RGBColor(44, 160, 44),
    RGBColor(214, 39, 40),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
];

type PlotResult = Result<(), Box<dyn std::error::Error>>;

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-3);
    (lo - pad, hi + pad)
}

/// Mean reward against timesteps, one line per run with a ±1 std band.
pub fn reward_curves(curves: &[Curve], path: &Path) -> PlotResult {
    let root = SVGBackend::new(path, (900, 540)).into_drawing_area();
    root.fill(&WHITE)?;
    let t_max = curves
        .iter()
        .flat_map(|c| c.points.iter().map(|p| p.0))
        .max()
        .unwrap_or(1)
        .max(1) as f64;
    let (lo, hi) = bounds(curves.iter().flat_map(|c| c.points.iter().flat_map(|p| [p.1 - p.2, p.1 + p.2])));
    let mut chart = ChartBuilder::on(&root)
        .caption("Reward during training", ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(0f64..t_max, lo..hi)?;
    chart
        .configure_mesh()
        .x_desc("timestep")
        .y_desc("mean episode reward")
        .draw()?;
    for (i, c) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut band: Vec<(f64, f64)> = c.points.iter().map(|p| (p.0 as f64, p.1 + p.2)).collect();
        band.extend(c.points.iter().rev().map(|p| (p.0 as f64, p.1 - p.2)));
        chart.draw_series(std::iter::once(Polygon::new(band, color.mix(0.2).filled())))?;
        chart
            .draw_series(LineSeries::new(c.points.iter().map(|p| (p.0 as f64, p.1)), color.stroke_width(2)))?
            .label(c.label.clone())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .position(SeriesLabelPosition::LowerRight)
        .draw()?;
    root.present()?;
    Ok(())
}

fn bar_panel(
    area: &DrawingArea<SVGBackend<'_>, plotters::coord::Shift>,
    title: &str,
    bars: &[(String, f64, f64)],
) -> PlotResult {
    let (lo, hi) = bounds(bars.iter().flat_map(|b| [0.0, b.1 - b.2, b.1 + b.2]));
    let n = bars.len().max(1) as f64;
    let mut chart = ChartBuilder::on(area)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(30)
        .y_label_area_size(60)
        .build_cartesian_2d(0f64..n, lo..hi)?;
    let labels: Vec<String> = bars.iter().map(|b| b.0.clone()).collect();
    chart
        .configure_mesh()
        .disable_x_mesh()
        .x_labels(bars.len() * 2 + 1)
        .x_label_formatter(&|x| {
            let i = x.floor() as usize;
            if (x - i as f64 - 0.5).abs() < 1e-6 {
                labels.get(i).cloned().unwrap_or_default()
            } else {
                String::new()
            }
        })
        .draw()?;
    for (i, (_, mean, std)) in bars.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let x = i as f64;
        chart.draw_series(std::iter::once(Rectangle::new([(x + 0.2, 0.0), (x + 0.8, *mean)], color.filled())))?;
        chart.draw_series(std::iter::once(PathElement::new(
            vec![(x + 0.5, mean - std), (x + 0.5, mean + std)],
            BLACK.stroke_width(2),
        )))?;
        for y in [mean - std, mean + std] {
            chart.draw_series(std::iter::once(PathElement::new(vec![(x + 0.4, y), (x + 0.6, y)], BLACK.stroke_width(2))))?;
        }
    }
    Ok(())
}

/// Final-evaluation reward and feasible-only cost with ±1 std error bars.
pub fn summary_bars(runs: &[(String, EvalSummary)], path: &Path) -> PlotResult {
    let root = SVGBackend::new(path, (1000, 480)).into_drawing_area();
    root.fill(&WHITE)?;
    let (left, right) = root.split_horizontally(500);
    let rewards: Vec<(String, f64, f64)> = runs.iter().map(|(l, s)| (l.clone(), s.mean_reward, s.std_reward)).collect();
    let costs: Vec<(String, f64, f64)> = runs
        .iter()
        .filter_map(|(l, s)| Some((l.clone(), s.mean_cost?, s.std_cost.unwrap_or(0.0))))
        .collect();
    bar_panel(&left, "Episode reward", &rewards)?;
    bar_panel(&right, "Episode cost (successful episodes)", &costs)?;
    root.present()?;
    Ok(())
}
