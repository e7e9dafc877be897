//! Procedural face-like images for hermetic tests and demo corpora.
//!
//! Each subject gets fixed identity parameters (geometry, skin and hair tone,
//! texture frequencies); each variant of a subject perturbs pose, scale and
//! lighting. Edges are soft so downscaling produces realistic aliasing.

use ndarray::Array3;
use rand::Rng;

use super::{ColorSpace, Image};
use crate::rng::derived_rng;

#[derive(Debug, Clone, Copy)]
struct Identity {
    skin: [f32; 3],
    hair: [f32; 3],
    eye: [f32; 3],
    lip: [f32; 3],
    face_w: f32,
    face_h: f32,
    eye_dx: f32,
    eye_y: f32,
    eye_r: f32,
    mouth_w: f32,
    mouth_y: f32,
    hair_line: f32,
    stripe_freq: f32,
    stripe_angle: f32,
    background: [f32; 3],
}

#[derive(Debug, Clone, Copy)]
struct Pose {
    dx: f32,
    dy: f32,
    scale: f32,
    light: f32,
    light_dir: f32,
}

#[derive(Debug, Clone)]
pub struct SyntheticFaces {
    seed: u64,
}

fn smoothstep(edge: f32, x: f32) -> f32 {
    // ~1.5px transition around the boundary.
    let t = ((edge - x) / 1.5 + 0.5).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

fn mix(a: [f32; 3], b: [f32; 3], t: f32) -> [f32; 3] {
    [0, 1, 2].map(|i| a[i] + (b[i] - a[i]) * t)
}

impl SyntheticFaces {
    pub fn new(seed: u64) -> Self {
        SyntheticFaces { seed }
    }

    fn identity(&self, subject: usize) -> Identity {
        let mut rng = derived_rng(self.seed, &format!("identity/{subject}"));
        let mut tone = |lo: f32, hi: f32| -> [f32; 3] {
            let base: f32 = rng.random_range(lo..hi);
            [base + rng.random_range(0.0..0.15), base * 0.8 + rng.random_range(0.0..0.1), base * 0.65 + rng.random_range(0.0..0.1)]
        };
        let skin = tone(0.35, 0.8);
        let hair = tone(0.05, 0.5);
        let eye = tone(0.05, 0.35);
        let lip = tone(0.3, 0.6);
        let background = tone(0.1, 0.9);
        Identity {
            skin,
            hair,
            eye,
            lip,
            face_w: rng.random_range(0.26..0.36),
            face_h: rng.random_range(0.36..0.46),
            eye_dx: rng.random_range(0.09..0.15),
            eye_y: rng.random_range(-0.12..-0.04),
            eye_r: rng.random_range(0.025..0.045),
            mouth_w: rng.random_range(0.07..0.14),
            mouth_y: rng.random_range(0.15..0.24),
            hair_line: rng.random_range(-0.3..-0.18),
            stripe_freq: rng.random_range(0.4..1.2),
            stripe_angle: rng.random_range(0.0..std::f32::consts::PI),
            background,
        }
    }

    fn pose(&self, subject: usize, variant: usize) -> Pose {
        if variant == 0 {
            return Pose { dx: 0.0, dy: 0.0, scale: 1.0, light: 1.0, light_dir: 0.0 };
        }
        let mut rng = derived_rng(self.seed, &format!("pose/{subject}/{variant}"));
        Pose {
            dx: rng.random_range(-0.06..0.06),
            dy: rng.random_range(-0.05..0.05),
            scale: rng.random_range(0.9..1.1),
            light: rng.random_range(0.75..1.15),
            light_dir: rng.random_range(-0.4..0.4),
        }
    }

    /// A 160×160 RGB face of `subject`; variant 0 is the frontal reference.
    pub fn face(&self, subject: usize, variant: usize) -> Image {
        self.render(subject, variant, 160, 160)
    }

    pub fn render(&self, subject: usize, variant: usize, h: usize, w: usize) -> Image {
        let id = self.identity(subject);
        let pose = self.pose(subject, variant);
        let size = h.min(w) as f32;
        let px_scale = size * pose.scale;
        let mut px = Array3::zeros((h, w, 3));
        for y in 0..h {
            for x in 0..w {
                // Face-centred coordinates in units of image size.
                let u = (x as f32 + 0.5 - w as f32 / 2.0) / px_scale - pose.dx;
                let v = (y as f32 + 0.5 - h as f32 / 2.0) / px_scale - pose.dy;
                let mut c = id.background;
                let face_d = ((u / id.face_w).powi(2) + (v / id.face_h).powi(2)).sqrt();
                let face_in = smoothstep(id.face_w * px_scale, face_d * id.face_w * px_scale);
                let shade = 1.0 + 0.25 * (u * 3.0 + pose.light_dir).tanh() * pose.light_dir.signum();
                let skin = id.skin.map(|s| s * shade);
                c = mix(c, skin, face_in);
                // Hair cap with directional texture.
                let hair_in = smoothstep(0.0, (v - id.hair_line) * px_scale) * face_in.max(smoothstep(
                    (id.face_w + 0.04) * px_scale,
                    ((u / (id.face_w + 0.04)).powi(2) + (v / (id.face_h + 0.04)).powi(2)).sqrt() * (id.face_w + 0.04) * px_scale,
                ));
                let along = u * id.stripe_angle.cos() + v * id.stripe_angle.sin();
                let stripes = 0.85 + 0.15 * (along * px_scale * id.stripe_freq).sin();
                c = mix(c, id.hair.map(|h| h * stripes), hair_in);
                // Eyes.
                for side in [-1.0f32, 1.0] {
                    let d = ((u - side * id.eye_dx).powi(2) + (v - id.eye_y).powi(2)).sqrt();
                    let white = smoothstep(id.eye_r * 1.6 * px_scale, d * px_scale);
                    c = mix(c, [0.92, 0.92, 0.9], white * face_in);
                    let iris = smoothstep(id.eye_r * px_scale, d * px_scale);
                    c = mix(c, id.eye, iris * face_in);
                    let brow_d = ((u - side * id.eye_dx) / (id.eye_r * 2.2)).powi(2)
                        + ((v - id.eye_y + id.eye_r * 2.2) / (id.eye_r * 0.5)).powi(2);
                    c = mix(c, id.hair, smoothstep(1.0 * px_scale * 0.02, brow_d.sqrt() * px_scale * 0.02) * face_in);
                }
                // Nose shadow and mouth.
                let nose = ((u / 0.025).powi(2) + ((v - 0.06) / 0.07).powi(2)).sqrt();
                c = mix(c, skin.map(|s| s * 0.8), 0.6 * smoothstep(px_scale * 0.02, nose * px_scale * 0.02) * face_in);
                let mouth = ((u / id.mouth_w).powi(2) + ((v - id.mouth_y) / 0.025).powi(2)).sqrt();
                c = mix(c, id.lip, smoothstep(px_scale * 0.03, mouth * px_scale * 0.03) * face_in);
                for ch in 0..3 {
                    px[[y, x, ch]] = (c[ch] * pose.light).clamp(0.0, 1.0);
                }
            }
        }
        Image::new(px, ColorSpace::Rgb).expect("values clamped")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_identity_dependent() {
        let gen = SyntheticFaces::new(1);
        assert_eq!(gen.face(3, 1), gen.face(3, 1));
        assert_ne!(gen.face(3, 0), gen.face(4, 0));
        assert_ne!(gen.face(3, 0), gen.face(3, 1));
        assert_eq!(gen.face(0, 0).dims(), (160, 160, 3));
        assert_eq!(gen.render(0, 0, 60, 48).dims(), (60, 48, 3));
    }
}
