//! SVG charts for sweep results.

use std::collections::BTreeMap;
use std::path::Path;

use plotters::prelude::*;

use crate::tasks::SweepRow;

const SIZE: (u32, u32) = (720, 480);

/// Mean of `max_width` over seeds, keyed by (series, x). Cells without a finite width are skipped.
fn averaged<K: Ord + Copy, X: Ord + Copy>(
    rows: &[SweepRow],
    series: impl Fn(&SweepRow) -> K,
    x: impl Fn(&SweepRow) -> X,
) -> BTreeMap<K, BTreeMap<X, f64>> {
    let mut acc: BTreeMap<K, BTreeMap<X, (f64, usize)>> = BTreeMap::new();
    for r in rows {
        if let Some(w) = r.max_width.filter(|w| w.is_finite() && *w > 0.0) {
            let e = acc.entry(series(r)).or_default().entry(x(r)).or_insert((0.0, 0));
            e.0 += w;
            e.1 += 1;
        }
    }
    acc.into_iter()
        .map(|(k, v)| (k, v.into_iter().map(|(x, (s, n))| (x, s / n as f64)).collect()))
        .collect()
}

fn y_range(data: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = data.fold((f64::INFINITY, 0.0_f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (1e-3, 1.0);
    }
    (lo / 2.0, (hi * 2.0).max(lo * 4.0))
}

/// Bits of an f64 ordered like the value, for non-negative inputs.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Key(u64);

impl Key {
    fn of(v: f64) -> Self {
        Key(v.to_bits())
    }
    fn get(self) -> f64 {
        f64::from_bits(self.0)
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

pub fn width_vs_epsilon(path: &Path, rows: &[SweepRow]) -> Result<(), String> {
    let data = averaged(rows, |r| r.level, |r| Key::of(r.epsilon0));
    let points: BTreeMap<usize, Vec<(f64, f64)>> = data
        .into_iter()
        .map(|(l, v)| (l, v.into_iter().map(|(x, y)| (x.get(), y)).filter(|(x, _)| *x > 0.0).collect()))
        .collect();
    let xs = points.values().flatten().map(|p| p.0);
    let (xlo, xhi) = xs.fold((f64::INFINITY, 0.0_f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let (xlo, xhi) = if xlo.is_finite() { (xlo / 2.0, xhi * 2.0) } else { (1e-6, 1e-2) };
    let (ylo, yhi) = y_range(points.values().flatten().map(|p| p.1));

    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("interval width vs noise level", ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d((xlo..xhi).log_scale(), (ylo..yhi).log_scale())
        .map_err(err)?;
    chart
        .configure_mesh()
        .x_desc("epsilon0")
        .y_desc("max width")
        .x_label_formatter(&|v| format!("{v:.0e}"))
        .y_label_formatter(&|v| format!("{v:.0e}"))
        .draw()
        .map_err(err)?;
    for (i, (level, pts)) in points.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        chart
            .draw_series(LineSeries::new(pts.iter().copied(), color.stroke_width(2)))
            .map_err(err)?
            .label(format!("level {level}"))
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
        chart.draw_series(pts.iter().map(|&p| Circle::new(p, 3, color.filled()))).map_err(err)?;
    }
    chart.configure_series_labels().border_style(BLACK).background_style(WHITE).draw().map_err(err)?;
    root.present().map_err(err)
}

pub fn width_vs_level(path: &Path, rows: &[SweepRow]) -> Result<(), String> {
    let data = averaged(rows, |r| Key::of(r.epsilon0), |r| r.level);
    let levels = rows.iter().map(|r| r.level);
    let (lmin, lmax) = levels.fold((usize::MAX, 0), |(lo, hi), l| (lo.min(l), hi.max(l)));
    let (lmin, lmax) = if lmin == usize::MAX { (1, 2) } else { (lmin, lmax.max(lmin + 1)) };
    let (ylo, yhi) = y_range(data.values().flat_map(|v| v.values().copied()));

    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("interval width vs level", ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(lmin as f64 - 0.25..lmax as f64 + 0.25, (ylo..yhi).log_scale())
        .map_err(err)?;
    chart
        .configure_mesh()
        .x_desc("level")
        .y_desc("max width")
        .x_labels(lmax - lmin + 1)
        .x_label_formatter(&|v| format!("{v:.0}"))
        .y_label_formatter(&|v| format!("{v:.0e}"))
        .draw()
        .map_err(err)?;
    for (i, (eps, pts)) in data.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        let pts: Vec<(f64, f64)> = pts.iter().map(|(&l, &w)| (l as f64, w)).collect();
        chart
            .draw_series(LineSeries::new(pts.iter().copied(), color.stroke_width(2)))
            .map_err(err)?
            .label(format!("epsilon0 = {:e}", eps.get()))
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
        chart.draw_series(pts.iter().map(|&p| Circle::new(p, 3, color.filled()))).map_err(err)?;
    }
    chart.configure_series_labels().border_style(BLACK).background_style(WHITE).draw().map_err(err)?;
    root.present().map_err(err)
}
