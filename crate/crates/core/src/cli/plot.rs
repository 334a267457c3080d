//! Standalone SVG line plots of a trace column.

use std::path::Path;

use plotters::prelude::*;

/// One series against the iteration number, with an optional horizontal reference line.
pub fn line_svg(
    path: &Path,
    title: &str,
    y_label: &str,
    points: &[(f64, f64)],
    reference: Option<f64>,
) -> Result<(), String> {
    if points.is_empty() {
        return Err("no points to plot".into());
    }
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err("non-finite values in series".into());
    }
    let x_max = points.iter().map(|p| p.0).fold(1.0, f64::max);
    let mut y_lo = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let mut y_hi = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    if let Some(r) = reference {
        y_lo = y_lo.min(r);
        y_hi = y_hi.max(r);
    }
    let pad = ((y_hi - y_lo) * 0.05).max(1e-9);

    let root = SVGBackend::new(path, (800, 480)).into_drawing_area();
    let err = |e: &dyn std::fmt::Display| e.to_string();
    root.fill(&WHITE).map_err(|e| err(&e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(64)
        .build_cartesian_2d(1.0..x_max, (y_lo - pad)..(y_hi + pad))
        .map_err(|e| err(&e))?;
    chart
        .configure_mesh()
        .x_desc("iteration")
        .y_desc(y_label)
        .draw()
        .map_err(|e| err(&e))?;
    chart
        .draw_series(LineSeries::new(points.iter().copied(), &BLUE))
        .map_err(|e| err(&e))?;
    if let Some(r) = reference {
        chart
            .draw_series(LineSeries::new([(1.0, r), (x_max, r)], &RED))
            .map_err(|e| err(&e))?;
    }
    root.present().map_err(|e| err(&e))?;
    Ok(())
}
