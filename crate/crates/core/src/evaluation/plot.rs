//! Minimal raster charts. No text rendering; colours carry the legend.
//!
//! | chart | encoding |
//! |---|---|
//! | bar chart | one bar per class, height proportional to count |
//! | confusion heatmap | one cell per (true, predicted), darker = more samples |
//! | training curves | blue val F1, orange train F1, red val loss, green train loss |

use image::{Rgb, RgbImage};

use crate::evaluation::ConfusionMatrix;
use crate::training::TrainRecord;

const WHITE: Rgb<u8> = Rgb([255, 255, 255]);
const AXIS: Rgb<u8> = Rgb([40, 40, 40]);
const GRID: Rgb<u8> = Rgb([225, 225, 225]);
const PALETTE: [Rgb<u8>; 6] = [
    Rgb([31, 119, 180]),
    Rgb([255, 127, 14]),
    Rgb([214, 39, 40]),
    Rgb([44, 160, 44]),
    Rgb([148, 103, 189]),
    Rgb([140, 86, 75]),
];

const MARGIN: u32 = 24;

fn canvas(w: u32, h: u32) -> RgbImage {
    RgbImage::from_pixel(w, h, WHITE)
}

fn fill_rect(img: &mut RgbImage, x0: u32, y0: u32, x1: u32, y1: u32, c: Rgb<u8>) {
    for y in y0..y1.min(img.height()) {
        for x in x0..x1.min(img.width()) {
            img.put_pixel(x, y, c);
        }
    }
}

fn line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), c: Rgb<u8>) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        for (ox, oy) in [(0, 0), (0, 1), (1, 0)] {
            let (px, py) = (x + ox, y + oy);
            if px >= 0 && py >= 0 && (px as u32) < img.width() && (py as u32) < img.height() {
                img.put_pixel(px as u32, py as u32, c);
            }
        }
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

fn axes(img: &mut RgbImage) {
    let (w, h) = (img.width(), img.height());
    for i in 1..=4 {
        let y = MARGIN + (h - 2 * MARGIN) * i / 5;
        fill_rect(img, MARGIN, y, w - MARGIN, y + 1, GRID);
    }
    fill_rect(img, MARGIN, h - MARGIN, w - MARGIN, h - MARGIN + 2, AXIS);
    fill_rect(img, MARGIN - 2, MARGIN, MARGIN, h - MARGIN, AXIS);
}

/// Vertical bars, one per count, scaled to the largest.
pub fn bar_chart(counts: &[usize]) -> RgbImage {
    let (w, h) = (480, 320);
    let mut img = canvas(w, h);
    axes(&mut img);
    let max = counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let n = counts.len().max(1) as u32;
    let slot = (w - 2 * MARGIN) / n;
    let plot_h = (h - 2 * MARGIN) as f64;
    for (i, &c) in counts.iter().enumerate() {
        let bar_h = (c as f64 / max * plot_h).round() as u32;
        let x0 = MARGIN + slot * i as u32 + slot / 6;
        fill_rect(&mut img, x0, h - MARGIN - bar_h, x0 + slot * 2 / 3, h - MARGIN, PALETTE[i % PALETTE.len()]);
    }
    img
}

/// Row-major grid of cells shaded by count relative to the largest cell.
pub fn confusion_heatmap(m: &ConfusionMatrix) -> RgbImage {
    let k = m.k().max(1) as u32;
    let cell = 96;
    let mut img = canvas(2 * MARGIN + k * cell, 2 * MARGIN + k * cell);
    let max = m.cells.iter().flatten().copied().max().unwrap_or(0).max(1) as f64;
    for (i, row) in m.cells.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            let t = v as f64 / max;
            let shade = |lo: f64, hi: f64| (lo + (hi - lo) * t).round() as u8;
            let c = Rgb([shade(247.0, 8.0), shade(251.0, 48.0), shade(255.0, 107.0)]);
            let (x0, y0) = (MARGIN + j as u32 * cell, MARGIN + i as u32 * cell);
            fill_rect(&mut img, x0 + 1, y0 + 1, x0 + cell - 1, y0 + cell - 1, c);
        }
    }
    img
}

/// F1 curves share the [0, 1] axis with losses scaled by the largest loss.
pub fn training_curves(record: &TrainRecord) -> RgbImage {
    let (w, h) = (640, 400);
    let mut img = canvas(w, h);
    axes(&mut img);
    let epochs = &record.epochs;
    if epochs.is_empty() {
        return img;
    }
    let max_loss = epochs
        .iter()
        .flat_map(|e| [e.train_loss, e.val_loss])
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::max)
        .max(1e-12);
    let series: [(Box<dyn Fn(usize) -> f64>, Rgb<u8>); 4] = [
        (Box::new(|i| epochs[i].val_f1), PALETTE[0]),
        (Box::new(|i| epochs[i].train_f1), PALETTE[1]),
        (Box::new(|i| epochs[i].val_loss / max_loss), PALETTE[2]),
        (Box::new(|i| epochs[i].train_loss / max_loss), PALETTE[3]),
    ];
    let plot_w = (w - 2 * MARGIN) as f64;
    let plot_h = (h - 2 * MARGIN) as f64;
    let n = epochs.len();
    let to_px = |i: usize, v: f64| {
        let x = if n == 1 { 0.5 } else { i as f64 / (n - 1) as f64 };
        let v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 1.0 };
        (
            (MARGIN as f64 + x * plot_w).round() as i64,
            (MARGIN as f64 + (1.0 - v) * plot_h).round() as i64,
        )
    };
    for (f, colour) in &series {
        for i in 0..n {
            let a = to_px(i, f(i));
            let b = if i + 1 < n { to_px(i + 1, f(i + 1)) } else { a };
            line(&mut img, a, b, *colour);
        }
    }
    let best = record.best_epoch.saturating_sub(1).min(n - 1);
    let (bx, _) = to_px(best, 0.0);
    for y in (MARGIN..h - MARGIN).step_by(6) {
        fill_rect(&mut img, bx as u32, y, bx as u32 + 1, y + 3, AXIS);
    }
    img
}
