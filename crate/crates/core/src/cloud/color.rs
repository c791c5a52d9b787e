use super::Rgb;

const KR: f64 = 0.2126;
const KG: f64 = 0.7152;
const KB: f64 = 0.0722;
const U_SCALE: f64 = 1.8556;
const V_SCALE: f64 = 1.5748;

/// Full-range BT.709 RGB -> YUV matrix (rows Y, U, V). Linear, so the
/// training losses apply it directly to network outputs.
pub const RGB_TO_YUV: [[f64; 3]; 3] = [
    [KR, KG, KB],
    [-KR / U_SCALE, -KG / U_SCALE, (1.0 - KB) / U_SCALE],
    [(1.0 - KR) / V_SCALE, -KG / V_SCALE, -KB / V_SCALE],
];

/// Full-range YUV with no chroma offset: `y ∈ [0,1]`, `u, v ∈ [-0.5, 0.5]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct YuvColor {
    pub y: f64,
    pub u: f64,
    pub v: f64,
}

pub fn rgb_to_yuv(c: Rgb) -> YuvColor {
    let [r, g, b] = c;
    let y = KR * r + KG * g + KB * b;
    YuvColor { y, u: (b - y) / U_SCALE, v: (r - y) / V_SCALE }
}

/// Inverse of [`rgb_to_yuv`]; the result is clamped to `[0, 1]`.
pub fn yuv_to_rgb(c: YuvColor) -> Rgb {
    let r = c.y + V_SCALE * c.v;
    let b = c.y + U_SCALE * c.u;
    let g = (c.y - KR * r - KB * b) / KG;
    [r, g, b].map(|x| x.clamp(0.0, 1.0))
}

/// Luma on the 0–255 scale of a color first quantized to 8 bits per channel.
pub fn rgb_to_y8(c: Rgb) -> f64 {
    let q = c.map(|x| (x.clamp(0.0, 1.0) * 255.0).round());
    KR * q[0] + KG * q[1] + KB * q[2]
}
