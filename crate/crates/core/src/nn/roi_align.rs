use ndarray::Array3;

/// Pools a box of a `(C, H, W)` feature map into `C x out x out` values by
/// averaging `samples x samples` bilinear samples per bin.
///
/// Box coordinates are in input-image pixels; `scale` maps them onto the
/// feature grid (`1 / stride`). Pixel centers sit at `+0.5`.
#[derive(Debug, Clone, Copy)]
pub struct RoiAlign {
    pub out: usize,
    pub samples: usize,
    pub scale: f32,
}

/// Bilinear taps: `(flat spatial index, weight)` per sample location.
type Taps = Vec<[(usize, f32); 4]>;

impl RoiAlign {
    fn taps(&self, b: [f32; 4], h: usize, w: usize) -> Taps {
        let x1 = b[0] * self.scale - 0.5;
        let y1 = b[1] * self.scale - 0.5;
        let x2 = b[2] * self.scale - 0.5;
        let y2 = b[3] * self.scale - 0.5;
        let bw = (x2 - x1).max(1e-3) / self.out as f32;
        let bh = (y2 - y1).max(1e-3) / self.out as f32;
        let s = self.samples;
        let mut taps = Vec::with_capacity(self.out * self.out * s * s);
        for py in 0..self.out {
            for px in 0..self.out {
                for sy in 0..s {
                    for sx in 0..s {
                        let y = y1 + bh * (py as f32 + (sy as f32 + 0.5) / s as f32);
                        let x = x1 + bw * (px as f32 + (sx as f32 + 0.5) / s as f32);
                        taps.push(bilinear(x, y, h, w));
                    }
                }
            }
        }
        taps
    }

    /// Returns the pooled features flattened as `[c][py][px]`.
    pub fn forward(&self, feat: &Array3<f32>, b: [f32; 4]) -> Vec<f32> {
        let (c, h, w) = feat.dim();
        let taps = self.taps(b, h, w);
        let f = feat.as_slice().expect("contiguous feature map");
        let per_bin = self.samples * self.samples;
        let bins = self.out * self.out;
        let norm = 1.0 / per_bin as f32;
        let mut out = vec![0.0f32; c * bins];
        for ci in 0..c {
            let plane = &f[ci * h * w..(ci + 1) * h * w];
            for bin in 0..bins {
                let mut acc = 0.0;
                for t in &taps[bin * per_bin..(bin + 1) * per_bin] {
                    for &(idx, wt) in t {
                        acc += plane[idx] * wt;
                    }
                }
                out[ci * bins + bin] = acc * norm;
            }
        }
        out
    }

    /// Adds the gradient of the pooled output into `dfeat`.
    pub fn backward(&self, dfeat: &mut Array3<f32>, b: [f32; 4], dy: &[f32]) {
        let (c, h, w) = dfeat.dim();
        let taps = self.taps(b, h, w);
        let df = dfeat.as_slice_mut().expect("contiguous feature map");
        let per_bin = self.samples * self.samples;
        let bins = self.out * self.out;
        let norm = 1.0 / per_bin as f32;
        for ci in 0..c {
            let plane = &mut df[ci * h * w..(ci + 1) * h * w];
            for bin in 0..bins {
                let g = dy[ci * bins + bin] * norm;
                if g == 0.0 {
                    continue;
                }
                for t in &taps[bin * per_bin..(bin + 1) * per_bin] {
                    for &(idx, wt) in t {
                        plane[idx] += g * wt;
                    }
                }
            }
        }
    }
}

fn bilinear(x: f32, y: f32, h: usize, w: usize) -> [(usize, f32); 4] {
    if y < -1.0 || y > h as f32 || x < -1.0 || x > w as f32 {
        return [(0, 0.0); 4];
    }
    let x = x.clamp(0.0, (w - 1) as f32);
    let y = y.clamp(0.0, (h - 1) as f32);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let lx = x - x0 as f32;
    let ly = y - y0 as f32;
    [
        (y0 * w + x0, (1.0 - ly) * (1.0 - lx)),
        (y0 * w + x1, (1.0 - ly) * lx),
        (y1 * w + x0, ly * (1.0 - lx)),
        (y1 * w + x1, ly * lx),
    ]
}
