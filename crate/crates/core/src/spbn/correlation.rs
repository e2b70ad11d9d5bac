//! Deterministic response generator: spectral-shape similarity between the
//! pooled template spectrum and the mean spectrum of every search cell.

use crate::error::{Error, Result};
use crate::numerics::TokenSeq;
use crate::types::{HsiCube, ResponseMaps};

/// Mean spectrum of every `cell x cell` block, row-major over the block grid.
pub fn cell_tokens(patch: &HsiCube, cell: usize) -> Result<TokenSeq> {
    let (c, h, w) = patch.dims();
    if cell == 0 || h % cell != 0 || w % cell != 0 {
        return Err(Error::InvalidInput(format!("patch {h}x{w} is not divisible into {cell}px cells")));
    }
    let (rows, cols) = (h / cell, w / cell);
    let norm = 1.0 / (cell * cell) as f64;
    let mut data = vec![0.0; rows * cols * c];
    for b in 0..c {
        let band = patch.band(b);
        for r in 0..h {
            let row = &band[r * w..(r + 1) * w];
            for (col, &v) in row.iter().enumerate() {
                data[((r / cell) * cols + col / cell) * c + b] += v as f64 * norm;
            }
        }
    }
    TokenSeq::new(rows * cols, c, data)
}

fn centered(v: &[f64]) -> Vec<f64> {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| x - mean).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Template feature: band-centered mean of all template tokens, unit norm.
pub fn pooled_template(template_feat: &TokenSeq) -> Result<Vec<f64>> {
    if template_feat.n_tokens() == 0 || template_feat.dim() < 2 {
        return Err(Error::InvalidInput("template feature needs tokens and at least 2 bands".into()));
    }
    let mut mean = vec![0.0; template_feat.dim()];
    for t in template_feat.iter() {
        mean.iter_mut().zip(t).for_each(|(m, v)| *m += v);
    }
    let pooled = centered(&mean);
    let n = norm(&pooled);
    if n <= 1e-12 * mean.iter().map(|v| v.abs()).sum::<f64>().max(1e-300) {
        return Err(Error::InvalidInput("template feature has zero norm after centering".into()));
    }
    Ok(pooled.into_iter().map(|v| v / n).collect())
}

/// Sub-cell shift of a parabola through `(-1, l), (0, c), (1, r)`, clamped
/// to half a cell; zero when the neighbors do not bracket a maximum.
fn parabolic_shift(l: Option<f64>, c: f64, r: Option<f64>) -> f64 {
    match (l, r) {
        (Some(l), Some(r)) => {
            let curv = l - 2.0 * c + r;
            if curv < -1e-12 {
                (0.5 * (l - r) / curv).clamp(-0.5, 0.5)
            } else {
                0.0
            }
        }
        _ => 0.0,
    }
}

/// `CM = (1 + cos)/2` between the pooled template and each band-centered
/// search token. Search tokens with a flat spectrum score cosine 0.
/// `size` is the normalized box size written to every cell.
pub fn correlate_spectral(
    template_feat: &TokenSeq,
    search_feat: &TokenSeq,
    rows: usize,
    cols: usize,
    size: [f64; 2],
) -> Result<ResponseMaps> {
    if template_feat.dim() != search_feat.dim() {
        return Err(Error::Shape(format!(
            "template width {} != search width {}",
            template_feat.dim(),
            search_feat.dim()
        )));
    }
    if search_feat.n_tokens() != rows * cols {
        return Err(Error::Shape(format!(
            "{} search tokens do not form a {rows}x{cols} grid",
            search_feat.n_tokens()
        )));
    }
    let t = pooled_template(template_feat)?;
    let cm: Vec<f64> = search_feat
        .iter()
        .map(|tok| {
            let s = centered(tok);
            let n = norm(&s);
            let cos = if n > 1e-12 {
                s.iter().zip(&t).map(|(a, b)| a * b).sum::<f64>() / n
            } else {
                0.0
            };
            (0.5 * (1.0 + cos)).clamp(0.0, 1.0)
        })
        .collect();
    let n = rows * cols;
    let at = |i: usize, j: usize| cm[i * cols + j];
    let mut offset = vec![0.5; 2 * n];
    for i in 0..rows {
        for j in 0..cols {
            let c = at(i, j);
            let dx = parabolic_shift((j > 0).then(|| at(i, j - 1)), c, (j + 1 < cols).then(|| at(i, j + 1)));
            let dy = parabolic_shift((i > 0).then(|| at(i - 1, j)), c, (i + 1 < rows).then(|| at(i + 1, j)));
            offset[i * cols + j] += dx;
            offset[n + i * cols + j] += dy;
        }
    }
    let [sw, sh] = size.map(|s| s.clamp(1e-6, 1.0));
    let mut sizes = vec![sw; n];
    sizes.extend(std::iter::repeat_n(sh, n));
    ResponseMaps::new(rows, cols, cm, offset, sizes)
}

/// Template spectrum bank for [`correlate_spectral`].
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCorrelation {
    template: TokenSeq,
    cell: usize,
}

impl SpectralCorrelation {
    pub fn new(template_patch: &HsiCube, cell: usize) -> Result<Self> {
        let template = cell_tokens(template_patch, cell)?;
        pooled_template(&template)?;
        Ok(Self { template, cell })
    }

    pub fn respond(&self, search: &HsiCube, size: [f64; 2]) -> Result<ResponseMaps> {
        let tokens = cell_tokens(search, self.cell)?;
        correlate_spectral(
            &self.template,
            &tokens,
            search.height() / self.cell,
            search.width() / self.cell,
            size,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spectrum_cube(spec: &[f32], h: usize, w: usize) -> HsiCube {
        let mut data = Vec::new();
        for &v in spec {
            data.extend(std::iter::repeat_n(v, h * w));
        }
        HsiCube::new(spec.len(), h, w, data).unwrap()
    }

    #[test]
    fn cell_means() {
        let data: Vec<f32> = (0..16).map(|v| v as f32).collect();
        let tok = cell_tokens(&HsiCube::new(1, 4, 4, data).unwrap(), 2).unwrap();
        assert_eq!(tok.data(), &[2.5, 4.5, 10.5, 12.5]);
    }

    #[test]
    fn exact_copy_peaks_at_one() {
        let obj = [0.2, 0.8, 0.4, 0.1];
        let bg = [0.5, 0.5, 0.6, 0.7];
        let template = spectrum_cube(&obj, 4, 4);
        let mut search = spectrum_cube(&bg, 16, 16);
        let mut data = search.data().to_vec();
        for (b, &v) in obj.iter().enumerate() {
            for r in 8..12 {
                for c in 4..8 {
                    data[b * 256 + r * 16 + c] = v;
                }
            }
        }
        search = HsiCube::new(4, 16, 16, data).unwrap();
        let gen = SpectralCorrelation::new(&template, 4).unwrap();
        let maps = gen.respond(&search, [0.25, 0.25]).unwrap();
        assert_eq!(maps.argmax(), (2, 1));
        assert!((maps.cm_at(2, 1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_features_give_flat_map() {
        let t = TokenSeq::new(1, 4, vec![1.0, -1.0, 1.0, -1.0]).unwrap();
        let s = TokenSeq::new(4, 4, [1.0, 1.0, -1.0, -1.0].repeat(4)).unwrap();
        let maps = correlate_spectral(&t, &s, 2, 2, [0.5, 0.5]).unwrap();
        assert!(maps.cm().iter().all(|&v| (v - 0.5).abs() < 1e-12));
        assert!(maps.offset().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn flat_template_errors() {
        let t = TokenSeq::new(2, 3, vec![0.4; 6]).unwrap();
        let s = TokenSeq::new(1, 3, vec![0.1, 0.2, 0.3]).unwrap();
        assert!(correlate_spectral(&t, &s, 1, 1, [0.5, 0.5]).is_err());
        assert!(correlate_spectral(&TokenSeq::new(1, 2, vec![0.0, 1.0]).unwrap(), &s, 1, 1, [0.5, 0.5]).is_err());
    }

    #[test]
    fn symmetric_neighbors_keep_center() {
        assert_eq!(parabolic_shift(Some(0.5), 1.0, Some(0.5)), 0.0);
        assert!(parabolic_shift(Some(0.9), 1.0, Some(0.5)) < 0.0);
        assert!((parabolic_shift(Some(0.9), 1.0, Some(1.0)) - 0.5).abs() < 1e-12);
        assert_eq!(parabolic_shift(None, 1.0, Some(0.2)), 0.0);
    }
}
