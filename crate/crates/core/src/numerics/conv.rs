//! Direct-loop 2-D and 3-D convolution (cross-correlation, as in deep
//! learning frameworks). No activation is applied here.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Weights `(out, in, depth, height, width)` plus one bias per output volume.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv3dKernel {
    pub weights: Tensor,
    pub bias: Vec<f64>,
}

impl Conv3dKernel {
    pub fn new(weights: Tensor, bias: Vec<f64>) -> Result<Self> {
        if weights.shape().len() != 5 {
            return Err(Error::Shape(format!("3-D kernel must be rank 5, got {:?}", weights.shape())));
        }
        if bias.len() != weights.shape()[0] || bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::Shape(format!(
                "3-D kernel with {} outputs needs as many finite biases, got {}",
                weights.shape()[0],
                bias.len()
            )));
        }
        Ok(Self { weights, bias })
    }

    pub fn out_channels(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weights.shape()[1]
    }
}

/// Weights `(out, in, height, width)` plus one bias per output channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2dKernel {
    pub weights: Tensor,
    pub bias: Vec<f64>,
}

impl Conv2dKernel {
    pub fn new(weights: Tensor, bias: Vec<f64>) -> Result<Self> {
        if weights.shape().len() != 4 {
            return Err(Error::Shape(format!("2-D kernel must be rank 4, got {:?}", weights.shape())));
        }
        if bias.len() != weights.shape()[0] || bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::Shape(format!(
                "2-D kernel with {} outputs needs as many finite biases, got {}",
                weights.shape()[0],
                bias.len()
            )));
        }
        Ok(Self { weights, bias })
    }

    pub fn out_channels(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weights.shape()[1]
    }
}

fn out_extent(input: usize, kernel: usize, stride: usize, pad: usize) -> Result<usize> {
    if stride == 0 {
        return Err(Error::InvalidInput("stride must be positive".into()));
    }
    let padded = input + 2 * pad;
    if padded < kernel {
        return Err(Error::Shape(format!(
            "kernel extent {kernel} exceeds padded input {padded}"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

/// `input` is `(C_in, D, H, W)`; `stride` and `padding` are per `(D, H, W)`.
pub fn conv3d(input: &Tensor, k: &Conv3dKernel, stride: [usize; 3], padding: [usize; 3]) -> Result<Tensor> {
    let s = input.shape();
    if s.len() != 4 {
        return Err(Error::Shape(format!("conv3d input must be rank 4, got {s:?}")));
    }
    let (cin, d, h, w) = (s[0], s[1], s[2], s[3]);
    let ks = k.weights.shape();
    let (cout, kin, kd, kh, kw) = (ks[0], ks[1], ks[2], ks[3], ks[4]);
    if kin != cin {
        return Err(Error::Shape(format!(
            "conv3d kernel expects {kin} input channels, got {cin}"
        )));
    }
    let od = out_extent(d, kd, stride[0], padding[0])?;
    let oh = out_extent(h, kh, stride[1], padding[1])?;
    let ow = out_extent(w, kw, stride[2], padding[2])?;

    let x = input.data();
    let wt = k.weights.data();
    let mut out = vec![0.0; cout * od * oh * ow];
    for o in 0..cout {
        for z in 0..od {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut acc = k.bias[o];
                    for c in 0..cin {
                        for r in 0..kd {
                            let iz = (z * stride[0] + r) as isize - padding[0] as isize;
                            if iz < 0 || iz >= d as isize {
                                continue;
                            }
                            for i in 0..kh {
                                let iy = (y * stride[1] + i) as isize - padding[1] as isize;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                let xrow = ((c * d + iz as usize) * h + iy as usize) * w;
                                let wrow = (((o * cin + c) * kd + r) * kh + i) * kw;
                                for j in 0..kw {
                                    let ix = (xx * stride[2] + j) as isize - padding[2] as isize;
                                    if ix < 0 || ix >= w as isize {
                                        continue;
                                    }
                                    acc += wt[wrow + j] * x[xrow + ix as usize];
                                }
                            }
                        }
                    }
                    out[((o * od + z) * oh + y) * ow + xx] = acc;
                }
            }
        }
    }
    Tensor::new(vec![cout, od, oh, ow], out)
}

/// `input` is `(C_in, H, W)`; `stride` and `padding` are per `(H, W)`.
pub fn conv2d(input: &Tensor, k: &Conv2dKernel, stride: [usize; 2], padding: [usize; 2]) -> Result<Tensor> {
    let s = input.shape();
    if s.len() != 3 {
        return Err(Error::Shape(format!("conv2d input must be rank 3, got {s:?}")));
    }
    let (cin, h, w) = (s[0], s[1], s[2]);
    let ks = k.weights.shape();
    let (cout, kin, kh, kw) = (ks[0], ks[1], ks[2], ks[3]);
    if kin != cin {
        return Err(Error::Shape(format!(
            "conv2d kernel expects {kin} input channels, got {cin}"
        )));
    }
    let oh = out_extent(h, kh, stride[0], padding[0])?;
    let ow = out_extent(w, kw, stride[1], padding[1])?;

    let x = input.data();
    let wt = k.weights.data();
    let mut out = vec![0.0; cout * oh * ow];
    for o in 0..cout {
        for y in 0..oh {
            for xx in 0..ow {
                let mut acc = k.bias[o];
                for c in 0..cin {
                    for i in 0..kh {
                        let iy = (y * stride[0] + i) as isize - padding[0] as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let xrow = (c * h + iy as usize) * w;
                        let wrow = ((o * cin + c) * kh + i) * kw;
                        for j in 0..kw {
                            let ix = (xx * stride[1] + j) as isize - padding[1] as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            acc += wt[wrow + j] * x[xrow + ix as usize];
                        }
                    }
                }
                out[(o * oh + y) * ow + xx] = acc;
            }
        }
    }
    Tensor::new(vec![cout, oh, ow], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn rel_close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * (1.0 + x.abs().max(y.abs())))
    }

    #[test]
    fn conv3d_all_ones_sums_to_eight() {
        let input = Tensor::new(vec![1, 2, 2, 2], vec![1.0; 8]).unwrap();
        let k = Conv3dKernel::new(Tensor::new(vec![1, 1, 2, 2, 2], vec![1.0; 8]).unwrap(), vec![0.0]).unwrap();
        let out = conv3d(&input, &k, [1, 1, 1], [0, 0, 0]).unwrap();
        assert_eq!(out.shape(), &[1, 1, 1, 1]);
        assert_eq!(out.data(), &[8.0]);
    }

    #[test]
    fn conv3d_dirac_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let input = random(vec![1, 5, 4, 6], &mut rng);
        let mut w = vec![0.0; 3 * 3 * 3];
        w[13] = 1.0; // center tap
        let k = Conv3dKernel::new(Tensor::new(vec![1, 1, 3, 3, 3], w).unwrap(), vec![0.0]).unwrap();
        let out = conv3d(&input, &k, [1, 1, 1], [1, 1, 1]).unwrap();
        assert_eq!(out.data(), input.data());
    }

    #[test]
    fn conv2d_all_ones_sums_to_four() {
        let input = Tensor::new(vec![1, 2, 2], vec![1.0; 4]).unwrap();
        let k = Conv2dKernel::new(Tensor::new(vec![1, 1, 2, 2], vec![1.0; 4]).unwrap(), vec![0.0]).unwrap();
        assert_eq!(conv2d(&input, &k, [1, 1], [0, 0]).unwrap().data(), &[4.0]);
    }

    #[test]
    fn conv2d_unit_1x1_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let input = random(vec![1, 5, 7], &mut rng);
        let k = Conv2dKernel::new(Tensor::new(vec![1, 1, 1, 1], vec![1.0]).unwrap(), vec![0.0]).unwrap();
        assert_eq!(conv2d(&input, &k, [1, 1], [0, 0]).unwrap().data(), input.data());
    }

    #[test]
    fn conv2d_stride_two_halves_extent() {
        let input = Tensor::zeros(vec![2, 8, 10]);
        let k = Conv2dKernel::new(Tensor::zeros(vec![3, 2, 3, 3]), vec![0.0; 3]).unwrap();
        let out = conv2d(&input, &k, [2, 2], [1, 1]).unwrap();
        assert_eq!(out.shape(), &[3, 4, 5]);
    }

    #[test]
    fn channel_mismatch_errors() {
        let input = Tensor::zeros(vec![2, 4, 4]);
        let k = Conv2dKernel::new(Tensor::zeros(vec![1, 3, 1, 1]), vec![0.0]).unwrap();
        assert!(conv2d(&input, &k, [1, 1], [0, 0]).is_err());
        let input = Tensor::zeros(vec![2, 3, 4, 4]);
        let k = Conv3dKernel::new(Tensor::zeros(vec![1, 1, 1, 1, 1]), vec![0.0]).unwrap();
        assert!(conv3d(&input, &k, [1, 1, 1], [0, 0, 0]).is_err());
    }

    #[test]
    fn linearity_zero_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let x = random(vec![2, 4, 5, 5], &mut rng);
            let y = random(vec![2, 4, 5, 5], &mut rng);
            let k = Conv3dKernel::new(random(vec![3, 2, 3, 3, 3], &mut rng), vec![0.0; 3]).unwrap();
            let (a, b) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let mix: Vec<f64> = x.data().iter().zip(y.data()).map(|(p, q)| a * p + b * q).collect();
            let lhs = conv3d(&Tensor::new(vec![2, 4, 5, 5], mix).unwrap(), &k, [1, 1, 1], [1, 1, 1]).unwrap();
            let cx = conv3d(&x, &k, [1, 1, 1], [1, 1, 1]).unwrap();
            let cy = conv3d(&y, &k, [1, 1, 1], [1, 1, 1]).unwrap();
            let rhs: Vec<f64> = cx.data().iter().zip(cy.data()).map(|(p, q)| a * p + b * q).collect();
            assert!(rel_close(lhs.data(), &rhs, 1e-9));
        }
    }
}
