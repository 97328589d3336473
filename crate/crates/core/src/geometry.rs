//! Small 3-vector helpers shared by the tensor, ODF and simulator code.

pub type Vec3 = [f64; 3];

const TIE: f64 = 1e-12;

#[inline]
pub fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm(a: &Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub fn normalize(a: &Vec3) -> Vec3 {
    let n = norm(a);
    [a[0] / n, a[1] / n, a[2] / n]
}

pub fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Pick the representative of `{v, -v}` with non-negative z; ties fall back
/// to y, then x.
pub fn canonical_axis(v: &Vec3) -> Vec3 {
    let flip = if v[2].abs() > TIE {
        v[2] < 0.0
    } else if v[1].abs() > TIE {
        v[1] < 0.0
    } else {
        v[0] < 0.0
    };
    if flip {
        [-v[0], -v[1], -v[2]]
    } else {
        *v
    }
}

/// Angle in degrees between two axes, ignoring sign. Inputs must be unit.
///
/// Equal to `acos(min(1, |a.b|))`; the atan2 form is exactly zero for
/// parallel inputs and keeps precision at small angles.
pub fn axis_angle_deg(a: &Vec3, b: &Vec3) -> f64 {
    norm(&cross(a, b)).atan2(dot(a, b).abs()).to_degrees()
}

/// Row-major 3x3 rotation about a unit `axis` by `angle` radians.
pub fn rotation_matrix(axis: &Vec3, angle: f64) -> [[f64; 3]; 3] {
    let [x, y, z] = normalize(axis);
    let (s, c) = angle.sin_cos();
    let t = 1.0 - c;
    [
        [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
        [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
        [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
    ]
}

pub fn rotate(r: &[[f64; 3]; 3], v: &Vec3) -> Vec3 {
    [dot(&r[0], v), dot(&r[1], v), dot(&r[2], v)]
}

/// Unit vector from polar angle `theta` and azimuth `phi` (radians).
pub fn from_spherical(theta: f64, phi: f64) -> Vec3 {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    [st * cp, st * sp, ct]
}
