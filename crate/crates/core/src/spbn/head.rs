//! Conv head, box decoding from response maps, and the training loss.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::archive::TensorArchive;
use crate::error::{Error, Result};
use crate::numerics::{conv2d, Conv2dKernel, Tensor, TokenSeq};
use crate::types::{BBox, ResponseMaps};

/// Placement of the search patch in the frame: search pixel `(u, v)` maps to
/// frame pixel `(x0 + u*scale, y0 + v*scale)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchWindow {
    pub x0: f64,
    pub y0: f64,
    pub scale: f64,
}

impl SearchWindow {
    pub const IDENTITY: SearchWindow = SearchWindow { x0: 0.0, y0: 0.0, scale: 1.0 };

    pub fn to_frame(&self, b: &BBox) -> BBox {
        BBox::new(self.x0 + b.x * self.scale, self.y0 + b.y * self.scale, b.w * self.scale, b.h * self.scale)
    }

    pub fn to_search(&self, b: &BBox) -> BBox {
        BBox::new((b.x - self.x0) / self.scale, (b.y - self.y0) / self.scale, b.w / self.scale, b.h / self.scale)
    }
}

/// Box at the classification peak, in frame coordinates.
pub fn decode_box(maps: &ResponseMaps, patch: usize, window: SearchWindow) -> BBox {
    let (i, j) = maps.argmax();
    let p = patch as f64;
    let cx = (j as f64 + maps.offset_at(0, i, j)) * p;
    let cy = (i as f64 + maps.offset_at(1, i, j)) * p;
    let w = maps.size_at(0, i, j) * (maps.cols() * patch) as f64;
    let h = maps.size_at(1, i, j) * (maps.rows() * patch) as f64;
    window.to_frame(&BBox::from_center(cx, cy, w, h))
}

/// Inverse of [`decode_box`] for a box in search coordinates: a one-hot
/// classification peak at the cell holding the center, offsets relative to
/// every cell, and constant normalized size.
pub fn encode_box_to_maps(b: &BBox, rows: usize, cols: usize, patch: usize) -> Result<ResponseMaps> {
    let (wx, hx) = ((cols * patch) as f64, (rows * patch) as f64);
    let (cx, cy) = b.center();
    if !b.is_valid() || b.w > wx || b.h > hx || !(0.0..wx).contains(&cx) || !(0.0..hx).contains(&cy) {
        return Err(Error::Geometry {
            context: "encode box".into(),
            detail: format!("{b:?} does not fit a {wx}x{hx} search window"),
        });
    }
    let p = patch as f64;
    let (gi, gj) = gt_cell(b, rows, cols, patch);
    let n = rows * cols;
    let mut cm = vec![0.0; n];
    cm[gi * cols + gj] = 1.0;
    let mut offset = vec![0.0; 2 * n];
    for i in 0..rows {
        for j in 0..cols {
            offset[i * cols + j] = cx / p - j as f64;
            offset[n + i * cols + j] = cy / p - i as f64;
        }
    }
    let mut size = vec![b.w / wx; n];
    size.extend(std::iter::repeat_n(b.h / hx, n));
    ResponseMaps::new(rows, cols, cm, offset, size)
}

fn gt_cell(b: &BBox, rows: usize, cols: usize, patch: usize) -> (usize, usize) {
    let (cx, cy) = b.center();
    let p = patch as f64;
    let i = ((cy / p).floor().max(0.0) as usize).min(rows - 1);
    let j = ((cx / p).floor().max(0.0) as usize).min(cols - 1);
    (i, j)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub cls: f64,
    pub giou: f64,
    pub l1: f64,
    pub total: f64,
}

const FOCAL_ALPHA: i32 = 2;
const FOCAL_BETA: i32 = 4;
const TARGET_SIGMA: f64 = 1.0;

/// Penalty-reduced focal loss against a Gaussian bump on the ground-truth
/// cell, normalized by the number of positive cells.
pub fn focal_loss(maps: &ResponseMaps, gt_cell: (usize, usize)) -> f64 {
    let eps = 1e-6;
    let mut total = 0.0;
    let mut positives = 0usize;
    for i in 0..maps.rows() {
        for j in 0..maps.cols() {
            let d2 = (i as f64 - gt_cell.0 as f64).powi(2) + (j as f64 - gt_cell.1 as f64).powi(2);
            let y = (-d2 / (2.0 * TARGET_SIGMA * TARGET_SIGMA)).exp();
            let p = maps.cm_at(i, j).clamp(eps, 1.0 - eps);
            if (i, j) == gt_cell {
                positives += 1;
                total -= (1.0 - p).powi(FOCAL_ALPHA) * p.ln();
            } else {
                total -= (1.0 - y).powi(FOCAL_BETA) * p.powi(FOCAL_ALPHA) * (1.0 - p).ln();
            }
        }
    }
    total / positives.max(1) as f64
}

pub fn giou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    let hull_w = (a.x + a.w).max(b.x + b.w) - a.x.min(b.x);
    let hull_h = (a.y + a.h).max(b.y + b.h) - a.y.min(b.y);
    let hull = hull_w * hull_h;
    let iou = if union > 0.0 { inter / union } else { 0.0 };
    if hull > 0.0 {
        iou - (hull - union) / hull
    } else {
        iou
    }
}

/// Classification + weighted GIoU + weighted L1 on normalized
/// `(cx, cy, w, h)`. `gt` is in search coordinates.
pub fn loss_total(pred: &ResponseMaps, gt: &BBox, patch: usize, lambda1: f64, lambda2: f64) -> Result<LossBreakdown> {
    if !gt.is_valid() {
        return Err(Error::Geometry {
            context: "loss".into(),
            detail: format!("degenerate ground truth {gt:?}"),
        });
    }
    let (wx, hx) = ((pred.cols() * patch) as f64, (pred.rows() * patch) as f64);
    let (gcx, gcy) = gt.center();
    if !(0.0..=wx).contains(&gcx) || !(0.0..=hx).contains(&gcy) {
        return Err(Error::Geometry {
            context: "loss".into(),
            detail: format!("ground truth {gt:?} outside the {wx}x{hx} search window"),
        });
    }
    let cls = focal_loss(pred, gt_cell(gt, pred.rows(), pred.cols(), patch));
    let b = decode_box(pred, patch, SearchWindow::IDENTITY);
    let giou_loss = 1.0 - giou(&b, gt);
    let (pcx, pcy) = b.center();
    let l1 = (pcx - gcx).abs() / wx + (pcy - gcy).abs() / hx + (b.w - gt.w).abs() / wx + (b.h - gt.h).abs() / hx;
    Ok(LossBreakdown {
        cls,
        giou: giou_loss,
        l1,
        total: cls + lambda1 * giou_loss + lambda2 * l1,
    })
}

const HEAD_DEPTH: usize = 3;

/// Three conv branches over the search-token grid: classification (sigmoid),
/// offset (raw) and size (sigmoid).
#[derive(Debug, Clone, PartialEq)]
pub struct ConvHead {
    pub cls: Vec<Conv2dKernel>,
    pub offset: Vec<Conv2dKernel>,
    pub size: Vec<Conv2dKernel>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl ConvHead {
    pub fn new(seed: u64, dim: usize, width: usize, std: f64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, std).map_err(|e| Error::InvalidInput(e.to_string()))?;
        let mut branch = |out: usize| -> Result<Vec<Conv2dKernel>> {
            (0..HEAD_DEPTH)
                .map(|k| {
                    let cin = if k == 0 { dim } else { width };
                    let cout = if k + 1 == HEAD_DEPTH { out } else { width };
                    let w = (0..cout * cin * 9).map(|_| normal.sample(&mut rng)).collect();
                    Conv2dKernel::new(Tensor::new(vec![cout, cin, 3, 3], w)?, vec![0.0; cout])
                })
                .collect()
        };
        Ok(Self {
            cls: branch(1)?,
            offset: branch(2)?,
            size: branch(2)?,
        })
    }

    fn run(branch: &[Conv2dKernel], grid: &Tensor) -> Result<Tensor> {
        let mut x = grid.clone();
        for (k, conv) in branch.iter().enumerate() {
            x = conv2d(&x, conv, [1, 1], [1, 1])?;
            if k + 1 < branch.len() {
                x = x.relu();
            }
        }
        Ok(x)
    }

    /// `tokens` are the search tokens in row-major grid order.
    pub fn forward(&self, tokens: &TokenSeq, rows: usize, cols: usize) -> Result<ResponseMaps> {
        if tokens.n_tokens() != rows * cols {
            return Err(Error::Shape(format!(
                "{} search tokens do not form a {rows}x{cols} grid",
                tokens.n_tokens()
            )));
        }
        let (n, dim) = (rows * cols, tokens.dim());
        let mut grid = vec![0.0; dim * n];
        for (t, tok) in tokens.iter().enumerate() {
            for (c, &v) in tok.iter().enumerate() {
                grid[c * n + t] = v;
            }
        }
        let grid = Tensor::new(vec![dim, rows, cols], grid)?;
        let cm = Self::run(&self.cls, &grid)?.map(sigmoid).into_data();
        let offset = Self::run(&self.offset, &grid)?.into_data();
        let size = Self::run(&self.size, &grid)?
            .map(|v| sigmoid(v).clamp(1e-6, 1.0))
            .into_data();
        ResponseMaps::new(rows, cols, cm, offset, size)
    }

    pub fn write_archive(&self, a: &mut TensorArchive) {
        for (name, branch) in [("cls", &self.cls), ("offset", &self.offset), ("size", &self.size)] {
            for (k, conv) in branch.iter().enumerate() {
                a.insert(format!("head.{name}.{k}.weight"), conv.weights.clone());
                a.insert_vec(format!("head.{name}.{k}.bias"), &conv.bias);
            }
        }
    }

    pub fn from_archive(a: &TensorArchive) -> Result<Self> {
        let branch = |name: &str| -> Result<Vec<Conv2dKernel>> {
            (0..HEAD_DEPTH)
                .map(|k| {
                    Conv2dKernel::new(
                        a.get(&format!("head.{name}.{k}.weight"))?.clone(),
                        a.get_vec(&format!("head.{name}.{k}.bias"))?,
                    )
                })
                .collect()
        };
        Ok(Self {
            cls: branch("cls")?,
            offset: branch("offset")?,
            size: branch("size")?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot(rows: usize, cols: usize, at: (usize, usize), o: (f64, f64), s: (f64, f64)) -> ResponseMaps {
        let n = rows * cols;
        let mut cm = vec![0.0; n];
        cm[at.0 * cols + at.1] = 1.0;
        let mut offset = vec![o.0; n];
        offset.extend(std::iter::repeat_n(o.1, n));
        let mut size = vec![s.0; n];
        size.extend(std::iter::repeat_n(s.1, n));
        ResponseMaps::new(rows, cols, cm, offset, size).unwrap()
    }

    #[test]
    fn decode_reference_case() {
        let maps = one_hot(16, 16, (3, 4), (0.5, -0.25), (0.25, 0.5));
        let b = decode_box(&maps, 16, SearchWindow::IDENTITY);
        assert_eq!(b.center(), (72.0, 44.0));
        assert_eq!((b.w, b.h), (64.0, 128.0));
    }

    #[test]
    fn unit_size_spans_window() {
        let maps = one_hot(4, 4, (2, 1), (0.0, 0.0), (1.0, 1.0));
        let b = decode_box(&maps, 8, SearchWindow::IDENTITY);
        assert_eq!(b.center(), (8.0, 16.0));
        assert_eq!((b.w, b.h), (32.0, 32.0));
    }

    #[test]
    fn ties_pick_first_row_major() {
        let mut cm = vec![0.0; 9];
        cm[5] = 0.7;
        cm[7] = 0.7;
        let maps = ResponseMaps::new(3, 3, cm, vec![0.0; 18], vec![0.5; 18]).unwrap();
        assert_eq!(maps.argmax(), (1, 2));
        let b = decode_box(&maps, 4, SearchWindow::IDENTITY);
        assert_eq!(b.center(), (8.0, 4.0));
    }

    #[test]
    fn window_maps_to_frame() {
        let maps = one_hot(4, 4, (1, 1), (0.5, 0.5), (0.25, 0.25));
        let win = SearchWindow { x0: 10.0, y0: 20.0, scale: 2.0 };
        let b = decode_box(&maps, 8, win);
        assert_eq!(b.center(), (10.0 + 12.0 * 2.0, 20.0 + 12.0 * 2.0));
        assert_eq!((b.w, b.h), (16.0, 16.0));
        let back = win.to_search(&b);
        assert_eq!(back.center(), (12.0, 12.0));
    }

    #[test]
    fn perfect_prediction_leaves_classification_only() {
        let gt = BBox::new(20.0, 30.0, 16.0, 24.0);
        let maps = encode_box_to_maps(&gt, 8, 8, 8).unwrap();
        let l = loss_total(&maps, &gt, 8, 2.0, 5.0).unwrap();
        assert!(l.giou.abs() < 1e-12 && l.l1.abs() < 1e-12);
        assert!((l.total - l.cls).abs() < 1e-12);
        assert!(l.cls >= 0.0);
    }

    #[test]
    fn zero_weights_reduce_to_classification() {
        let gt = BBox::new(20.0, 30.0, 16.0, 24.0);
        let maps = one_hot(8, 8, (0, 0), (0.1, 0.9), (0.3, 0.6));
        let l = loss_total(&maps, &gt, 8, 0.0, 0.0).unwrap();
        assert_eq!(l.total, l.cls);
        assert!(l.giou > 0.0 && l.l1 > 0.0);
    }

    #[test]
    fn degenerate_gt_errors() {
        let maps = one_hot(4, 4, (0, 0), (0.5, 0.5), (0.5, 0.5));
        assert!(loss_total(&maps, &BBox::new(1.0, 1.0, 0.0, 3.0), 8, 2.0, 5.0).is_err());
        assert!(loss_total(&maps, &BBox::new(100.0, 1.0, 4.0, 3.0), 8, 2.0, 5.0).is_err());
    }

    #[test]
    fn giou_reference_values() {
        let a = BBox::new(0.0, 0.0, 2.0, 2.0);
        assert_eq!(giou(&a, &a), 1.0);
        // disjoint, hull 4x2 = 8, union 8
        assert_eq!(giou(&a, &BBox::new(2.0, 0.0, 2.0, 2.0)), 0.0);
        // hull 6x2 = 12, union 8: -4/12
        assert!((giou(&a, &BBox::new(4.0, 0.0, 2.0, 2.0)) + 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn conv_head_geometry() {
        let head = ConvHead::new(0, 8, 4, 0.1).unwrap();
        let tokens = TokenSeq::new(12, 8, (0..96).map(|i| (i as f64 * 0.3).sin()).collect()).unwrap();
        let maps = head.forward(&tokens, 3, 4).unwrap();
        assert_eq!((maps.rows(), maps.cols()), (3, 4));
        assert!(maps.size().iter().all(|&s| s > 0.0 && s <= 1.0));
        assert!(head.forward(&tokens, 4, 4).is_err());
        let mut a = TensorArchive::new();
        head.write_archive(&mut a);
        assert_eq!(ConvHead::from_archive(&a).unwrap(), head);
    }
}
