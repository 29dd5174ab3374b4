use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{project, Camera, Estimate, Observation, Scene};

/// Which quantity the ±`keypoint_noise` perturbation is applied to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseTarget {
    /// Perturb each 3D point, then project the perturbed point.
    #[default]
    Points,
    /// Project the true point, then perturb the image keypoint.
    Keypoints,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub n_points: usize,
    pub n_cameras: usize,
    /// Points are uniform in `[-point_range, point_range]³`.
    pub point_range: f64,
    pub keypoint_noise: f64,
    /// Relative noise on the initial camera position and orientation.
    pub camera_noise: f64,
    pub noise_target: NoiseTarget,
    pub camera_radius: f64,
    /// Angle between neighbouring cameras on the circle, in degrees; also
    /// the reference angle for orientation noise.
    pub camera_separation_deg: f64,
    /// Reject draws where any point sits closer than this to a camera plane.
    pub min_depth: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_points: 10,
            n_cameras: 2,
            point_range: 2.0,
            keypoint_noise: 0.5,
            camera_noise: 0.5,
            noise_target: NoiseTarget::Points,
            camera_radius: 6.0,
            camera_separation_deg: 40.0,
            min_depth: 0.5,
        }
    }
}

impl GeneratorConfig {
    /// Same geometry with every noise source switched off.
    pub fn noiseless() -> Self {
        Self {
            keypoint_noise: 0.0,
            camera_noise: 0.0,
            ..Self::default()
        }
    }
}

/// A generated problem: the true scene with its (noisy) keypoints, the
/// initial guess handed to the optimizer and the positions the keypoints
/// were projected from.
#[derive(Debug, Clone, PartialEq)]
pub struct BaProblem {
    pub scene: Scene,
    pub initial: Estimate,
    pub sources: Vec<Vector3<f64>>,
}

fn look_at(position: Vector3<f64>, target: Vector3<f64>) -> UnitQuaternion<f64> {
    let z = (target - position).normalize();
    let x = Vector3::y().cross(&z).normalize();
    let y = z.cross(&x);
    let rows = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
    UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(rows))
}

fn random_axis(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

fn symmetric(rng: &mut ChaCha8Rng, half_width: f64) -> f64 {
    if half_width == 0.0 {
        0.0
    } else {
        rng.gen_range(-half_width..=half_width)
    }
}

fn min_depth(cameras: &[Camera], points: &[Vector3<f64>]) -> f64 {
    cameras
        .iter()
        .flat_map(|c| points.iter().map(move |p| c.to_camera_frame(p).z))
        .fold(f64::INFINITY, f64::min)
}

fn attempt(rng: &mut ChaCha8Rng, cfg: &GeneratorConfig) -> Option<BaProblem> {
    let points: Vec<Vector3<f64>> = (0..cfg.n_points)
        .map(|_| Vector3::from_fn(|_, _| rng.gen_range(-cfg.point_range..=cfg.point_range)))
        .collect();
    let centroid = points.iter().sum::<Vector3<f64>>() / cfg.n_points.max(1) as f64;
    let sep = cfg.camera_separation_deg.to_radians();
    let cameras: Vec<Camera> = (0..cfg.n_cameras)
        .map(|j| {
            let a = (j as f64 - (cfg.n_cameras as f64 - 1.0) / 2.0) * sep;
            let pos = cfg.camera_radius * Vector3::new(a.sin(), 0.0, -a.cos());
            Camera::new(look_at(pos, centroid), pos)
        })
        .collect();

    let sources: Vec<Vector3<f64>> = match cfg.noise_target {
        NoiseTarget::Points => points
            .iter()
            .map(|p| p + Vector3::from_fn(|_, _| symmetric(rng, cfg.keypoint_noise)))
            .collect(),
        NoiseTarget::Keypoints => points.clone(),
    };
    if min_depth(&cameras, &sources) < cfg.min_depth {
        return None;
    }
    let mut observations = Vec::with_capacity(cfg.n_cameras * cfg.n_points);
    for (j, cam) in cameras.iter().enumerate() {
        for (i, src) in sources.iter().enumerate() {
            let mut keypoint = project(cam, src).ok()?;
            if cfg.noise_target == NoiseTarget::Keypoints {
                keypoint.x += symmetric(rng, cfg.keypoint_noise);
                keypoint.y += symmetric(rng, cfg.keypoint_noise);
            }
            observations.push(Observation {
                camera: j,
                point: i,
                keypoint,
            });
        }
    }

    let initial_cameras: Vec<Camera> = cameras
        .iter()
        .map(|c| {
            let position = c
                .position
                .map(|v| v * (1.0 + symmetric(rng, cfg.camera_noise)));
            let axis = random_axis(rng);
            let angle = symmetric(rng, cfg.camera_noise) * sep;
            let orientation = UnitQuaternion::from_scaled_axis(axis * angle) * c.orientation;
            Camera {
                orientation,
                position,
                ..c.clone()
            }
        })
        .collect();
    if min_depth(&initial_cameras, &points) < cfg.min_depth {
        return None;
    }
    Some(BaProblem {
        scene: Scene {
            cameras,
            points: points.clone(),
            observations,
        },
        initial: Estimate {
            cameras: initial_cameras,
            points,
        },
        sources,
    })
}

/// Deterministic problem for `seed` with the default configuration.
pub fn generate_problem(seed: u64) -> BaProblem {
    generate_problem_with(seed, &GeneratorConfig::default())
}

/// Draws are repeated from the same stream until every point has enough
/// depth in both the true and the initial cameras.
pub fn generate_problem_with(seed: u64, cfg: &GeneratorConfig) -> BaProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..10_000 {
        if let Some(p) = attempt(&mut rng, cfg) {
            return p;
        }
    }
    panic!("generator configuration never yields a valid scene");
}
