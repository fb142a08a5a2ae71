//! Static SVG line plots of a simulation log.

use std::ops::Range;
use std::path::Path;

use gptrack_core::reference::CHANNEL_NAMES;
use gptrack_core::sim::{tracking_errors, LogRow};
use gptrack_core::{wrap_angle, N_CHANNELS};
use plotters::coord::Shift;
use plotters::prelude::*;

use crate::config::PlotKind;
use crate::error::CliError;
use crate::io::{io_scale, unit_name};

const SIZE: (u32, u32) = (1200, 900);
/// Upper bound on plotted points per series.
const MAX_POINTS: usize = 3000;

type Series = (&'static str, RGBColor, Vec<(f64, f64)>);

fn plot_error<E: std::error::Error + Send + Sync>(
    path: &Path,
    e: DrawingAreaErrorKind<E>,
) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

fn decimate(points: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    let stride = points.len().div_ceil(MAX_POINTS).max(1);
    points.into_iter().step_by(stride).collect()
}

fn range(values: impl Iterator<Item = f64>) -> Range<f64> {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(v), b.max(v))
        });
    if !lo.is_finite() {
        return 0.0..1.0;
    }
    let pad = ((hi - lo) * 0.05)
        .max(hi.abs().max(lo.abs()) * 1e-9)
        .max(1e-12);
    lo - pad..hi + pad
}

fn panel(
    area: &DrawingArea<SVGBackend, Shift>,
    path: &Path,
    title: &str,
    y_label: &str,
    series: Vec<Series>,
) -> Result<(), CliError> {
    let err = |e| plot_error(path, e);
    let xs = range(series.iter().flat_map(|s| s.2.iter().map(|p| p.0)));
    let ys = range(series.iter().flat_map(|s| s.2.iter().map(|p| p.1)));
    let mut chart = ChartBuilder::on(area)
        .caption(title, ("sans-serif", 16))
        .margin(8)
        .x_label_area_size(30)
        .y_label_area_size(70)
        .build_cartesian_2d(xs, ys)
        .map_err(err)?;
    chart
        .configure_mesh()
        .x_desc("t [s]")
        .y_desc(y_label)
        .draw()
        .map_err(err)?;
    let labelled = series.len() > 1;
    for (label, color, points) in series {
        let drawn = chart
            .draw_series(LineSeries::new(decimate(points), &color))
            .map_err(err)?;
        if labelled {
            drawn
                .label(label)
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
        }
    }
    if labelled {
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(err)?;
    }
    Ok(())
}

fn channel_delta(c: usize, a: f64, b: f64) -> f64 {
    let d = a - b;
    (if c < 3 { d } else { wrap_angle(d) }) * io_scale(c)
}

fn gp_error(
    rows: &[LogRow],
    root: &DrawingArea<SVGBackend, Shift>,
    path: &Path,
) -> Result<(), CliError> {
    for (c, area) in root
        .split_evenly((3, 2))
        .iter()
        .enumerate()
        .take(N_CHANNELS)
    {
        let points = rows
            .iter()
            .filter_map(|r| {
                r.one_step
                    .map(|p| (r.t, channel_delta(c, p[c], r.truth[c])))
            })
            .collect();
        panel(
            area,
            path,
            &format!("GP one-step error, {}", CHANNEL_NAMES[c]),
            unit_name(c),
            vec![("error", BLUE, points)],
        )?;
    }
    Ok(())
}

fn pose(
    rows: &[LogRow],
    root: &DrawingArea<SVGBackend, Shift>,
    path: &Path,
) -> Result<(), CliError> {
    for (c, area) in root
        .split_evenly((3, 2))
        .iter()
        .enumerate()
        .take(N_CHANNELS)
    {
        let s = io_scale(c);
        let tool = rows.iter().map(|r| (r.t, r.tool[c] * s)).collect();
        let reference = rows.iter().map(|r| (r.t, r.reference[c] * s)).collect();
        panel(
            area,
            path,
            &format!("Tool pose vs reference, {}", CHANNEL_NAMES[c]),
            unit_name(c),
            vec![("reference", RED, reference), ("tool", BLUE, tool)],
        )?;
    }
    Ok(())
}

fn pose_error(
    rows: &[LogRow],
    root: &DrawingArea<SVGBackend, Shift>,
    path: &Path,
) -> Result<(), CliError> {
    let errors: Vec<(f64, f64, f64)> = rows
        .iter()
        .map(|r| {
            let (p, o) = tracking_errors(&r.tool, &r.reference);
            (r.t, p * 1e3, o * io_scale(3))
        })
        .collect();
    let areas = root.split_evenly((2, 1));
    panel(
        &areas[0],
        path,
        "Position error",
        "mm",
        vec![(
            "position",
            BLUE,
            errors.iter().map(|e| (e.0, e.1)).collect(),
        )],
    )?;
    panel(
        &areas[1],
        path,
        "Orientation error (max Euler angle)",
        "deg",
        vec![(
            "orientation",
            BLUE,
            errors.iter().map(|e| (e.0, e.2)).collect(),
        )],
    )
}

/// Renders one plot kind to an SVG file.
pub fn render(kind: PlotKind, rows: &[LogRow], path: &Path) -> Result<(), CliError> {
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_error(path, e))?;
    match kind {
        PlotKind::GpError => gp_error(rows, &root, path)?,
        PlotKind::Pose => pose(rows, &root, path)?,
        PlotKind::PoseError => pose_error(rows, &root, path)?,
    }
    root.present().map_err(|e| plot_error(path, e))
}
