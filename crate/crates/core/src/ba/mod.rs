//! Two-view bundle adjustment: reprojection residuals, jet Jacobians and
//! the Schur-complement reduction of the damped normal equations.
//!
//! Parameter vector layout: 6 per camera (axis-angle increment left-composed
//! onto the stored world-to-camera quaternion, then position), all cameras
//! first, followed by 3 per point.

mod generate;
mod io;
pub mod jet;

use nalgebra::{DMatrix, DVector, Matrix3, UnitQuaternion, Vector2, Vector3};

pub use generate::{
    generate_problem, generate_problem_with, BaProblem, GeneratorConfig, NoiseTarget,
};
pub use io::{parse_problem, write_problem};
pub use jet::{Jet, Scalar};

/// Floor applied to each `DᵀD` entry.
pub const SCALING_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BaError {
    #[error("point {point} has non-positive depth {depth} in camera {camera}")]
    NonPositiveDepth {
        camera: usize,
        point: usize,
        depth: f64,
    },
    #[error("observation references camera {camera} / point {point} out of range")]
    BadObservation { camera: usize, point: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("point block {0} is singular")]
    SingularPointBlock(usize),
    #[error("damping must be non-negative (λ1 = {0}, λ2 = {1})")]
    NegativeDamping(f64, f64),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    /// World-to-camera rotation.
    pub orientation: UnitQuaternion<f64>,
    /// Camera centre in world coordinates.
    pub position: Vector3<f64>,
    pub focal: f64,
    pub principal_point: Vector2<f64>,
}

impl Camera {
    pub fn new(orientation: UnitQuaternion<f64>, position: Vector3<f64>) -> Self {
        Self {
            orientation,
            position,
            focal: 1.0,
            principal_point: Vector2::zeros(),
        }
    }

    pub fn to_camera_frame(&self, point: &Vector3<f64>) -> Vector3<f64> {
        self.orientation * (point - self.position)
    }
}

/// Pinhole projection of a world point.
pub fn project(camera: &Camera, point: &Vector3<f64>) -> Result<Vector2<f64>, BaError> {
    let p = camera.to_camera_frame(point);
    if p.z <= 0.0 {
        return Err(BaError::NonPositiveDepth {
            camera: 0,
            point: 0,
            depth: p.z,
        });
    }
    Ok(camera.focal * Vector2::new(p.x / p.z, p.y / p.z) + camera.principal_point)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub camera: usize,
    pub point: usize,
    pub keypoint: Vector2<f64>,
}

/// Current camera poses and point positions (the optimizer's θ).
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub cameras: Vec<Camera>,
    pub points: Vec<Vector3<f64>>,
}

impl Estimate {
    pub fn layout(&self) -> ParameterLayout {
        ParameterLayout {
            n_cameras: self.cameras.len(),
            n_points: self.points.len(),
        }
    }

    /// `θ ⊕ δ`: rotations compose as `exp(ω)·q` and are re-normalized;
    /// positions and points add.
    pub fn retract(&self, delta: &DVector<f64>) -> Estimate {
        let layout = self.layout();
        assert_eq!(delta.len(), layout.n_params(), "step length");
        let cameras = self
            .cameras
            .iter()
            .enumerate()
            .map(|(j, cam)| {
                let o = layout.camera_offset(j);
                let omega = Vector3::new(delta[o], delta[o + 1], delta[o + 2]);
                let q = UnitQuaternion::from_scaled_axis(omega) * cam.orientation;
                Camera {
                    orientation: UnitQuaternion::new_normalize(q.into_inner()),
                    position: cam.position + Vector3::new(delta[o + 3], delta[o + 4], delta[o + 5]),
                    ..cam.clone()
                }
            })
            .collect();
        let points = self
            .points
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let o = layout.point_offset(i);
                x + Vector3::new(delta[o], delta[o + 1], delta[o + 2])
            })
            .collect();
        Estimate { cameras, points }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParameterLayout {
    pub n_cameras: usize,
    pub n_points: usize,
}

impl ParameterLayout {
    pub const CAMERA_PARAMS: usize = 6;

    pub fn n_camera_params(&self) -> usize {
        Self::CAMERA_PARAMS * self.n_cameras
    }

    pub fn n_params(&self) -> usize {
        self.n_camera_params() + 3 * self.n_points
    }

    pub fn camera_offset(&self, j: usize) -> usize {
        Self::CAMERA_PARAMS * j
    }

    pub fn point_offset(&self, i: usize) -> usize {
        self.n_camera_params() + 3 * i
    }
}

/// Ground-truth scene plus the keypoints the optimizer fits.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub cameras: Vec<Camera>,
    pub points: Vec<Vector3<f64>>,
    pub observations: Vec<Observation>,
}

impl Scene {
    pub fn validate(&self) -> Result<(), BaError> {
        for o in &self.observations {
            if o.camera >= self.cameras.len() || o.point >= self.points.len() {
                return Err(BaError::BadObservation {
                    camera: o.camera,
                    point: o.point,
                });
            }
        }
        Ok(())
    }

    pub fn ground_truth(&self) -> Estimate {
        Estimate {
            cameras: self.cameras.clone(),
            points: self.points.clone(),
        }
    }
}

fn check_indices(scene: &Scene, params: &Estimate) -> Result<(), BaError> {
    for o in &scene.observations {
        if o.camera >= params.cameras.len() || o.point >= params.points.len() {
            return Err(BaError::BadObservation {
                camera: o.camera,
                point: o.point,
            });
        }
    }
    Ok(())
}

fn reprojection(obs: &Observation, params: &Estimate) -> Result<Vector2<f64>, BaError> {
    project(&params.cameras[obs.camera], &params.points[obs.point]).map_err(|e| match e {
        BaError::NonPositiveDepth { depth, .. } => BaError::NonPositiveDepth {
            camera: obs.camera,
            point: obs.point,
            depth,
        },
        other => other,
    })
}

/// Stacked residuals `u'_ij − u_ij`, two rows per observation.
pub fn residuals(scene: &Scene, params: &Estimate) -> Result<DVector<f64>, BaError> {
    check_indices(scene, params)?;
    let mut r = DVector::zeros(2 * scene.observations.len());
    for (k, o) in scene.observations.iter().enumerate() {
        let d = reprojection(o, params)? - o.keypoint;
        r[2 * k] = d.x;
        r[2 * k + 1] = d.y;
    }
    Ok(r)
}

/// `S = Σ ‖u_ij − u'_ij‖`: a sum of per-observation Euclidean distances.
pub fn total_cost(scene: &Scene, params: &Estimate) -> Result<f64, BaError> {
    let r = residuals(scene, params)?;
    Ok(r.as_slice().chunks(2).map(|c| c[0].hypot(c[1])).sum())
}

fn cross<S: Scalar>(a: &[S; 3], b: &[S; 3]) -> [S; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn rotate_axis_angle<S: Scalar>(omega: &[S; 3], v: &[S; 3]) -> [S; 3] {
    let theta2 = omega[0] * omega[0] + omega[1] * omega[1] + omega[2] * omega[2];
    let wxv = cross(omega, v);
    if theta2.value() < 1e-16 {
        return [v[0] + wxv[0], v[1] + wxv[1], v[2] + wxv[2]];
    }
    let theta = theta2.sqrt();
    let (s, c) = (theta.sin(), theta.cos());
    let a = s / theta;
    let b = (S::constant(1.0) - c) / theta2;
    let wv = omega[0] * v[0] + omega[1] * v[1] + omega[2] * v[2];
    std::array::from_fn(|i| v[i] * c + wxv[i] * a + omega[i] * wv * b)
}

/// Projection of `x` through `camera` after perturbing it by `(ω, δc)`,
/// generic over the scalar type. Returns the camera-frame depth alongside.
fn perturbed_projection<S: Scalar>(
    camera: &Camera,
    omega: &[S; 3],
    centre: &[S; 3],
    x: &[S; 3],
) -> ([S; 2], f64) {
    let rot: Matrix3<f64> = camera.orientation.to_rotation_matrix().into_inner();
    let d: [S; 3] = std::array::from_fn(|i| x[i] - centre[i]);
    let p0: [S; 3] = std::array::from_fn(|r| {
        d[0].scale(rot[(r, 0)]) + d[1].scale(rot[(r, 1)]) + d[2].scale(rot[(r, 2)])
    });
    let p = rotate_axis_angle(omega, &p0);
    let depth = p[2].value();
    (
        [
            (p[0] / p[2]).scale(camera.focal) + S::constant(camera.principal_point.x),
            (p[1] / p[2]).scale(camera.focal) + S::constant(camera.principal_point.y),
        ],
        depth,
    )
}

/// Residuals (identical to [`residuals`]) and their dense Jacobian
/// `J = ∂r/∂δ` at `δ = 0`, computed with 9-slot jets per observation
/// (camera rotation, camera centre, point).
pub fn residuals_and_jacobian(
    scene: &Scene,
    params: &Estimate,
) -> Result<(DVector<f64>, DMatrix<f64>), BaError> {
    check_indices(scene, params)?;
    let layout = params.layout();
    let n_res = 2 * scene.observations.len();
    let mut r = DVector::zeros(n_res);
    let mut jac = DMatrix::zeros(n_res, layout.n_params());
    for (k, o) in scene.observations.iter().enumerate() {
        let cam = &params.cameras[o.camera];
        let omega: [Jet<9>; 3] = std::array::from_fn(|i| Jet::variable(0.0, i));
        let centre: [Jet<9>; 3] = std::array::from_fn(|i| Jet::variable(cam.position[i], 3 + i));
        let x: [Jet<9>; 3] =
            std::array::from_fn(|i| Jet::variable(params.points[o.point][i], 6 + i));
        let (u, depth) = perturbed_projection(cam, &omega, &centre, &x);
        if depth <= 0.0 {
            return Err(BaError::NonPositiveDepth {
                camera: o.camera,
                point: o.point,
                depth,
            });
        }
        let co = layout.camera_offset(o.camera);
        let po = layout.point_offset(o.point);
        let value = reprojection(o, params)? - o.keypoint;
        for (a, ua) in u.iter().enumerate() {
            let row = 2 * k + a;
            r[row] = value[a];
            for s in 0..6 {
                jac[(row, co + s)] = ua.partials[s];
            }
            for s in 0..3 {
                jac[(row, po + s)] = ua.partials[6 + s];
            }
        }
    }
    Ok((r, jac))
}

/// `D` diagonal: column norms of `J`, so that `DᵀD = diag(JᵀJ)` (floored).
pub fn jacobian_scaling(jac: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(
        jac.ncols(),
        jac.column_iter()
            .map(|c| c.norm_squared().max(SCALING_FLOOR).sqrt()),
    )
}

/// `H = JᵀJ + λ1·DᵀD + λ2·I` split into camera block `B`, per-point 3×3
/// blocks and camera/point coupling `E`, with gradient `g = Jᵀr`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalEquations {
    pub camera_block: DMatrix<f64>,
    pub point_blocks: Vec<Matrix3<f64>>,
    pub coupling: DMatrix<f64>,
    pub gradient_cameras: DVector<f64>,
    pub gradient_points: DVector<f64>,
}

impl NormalEquations {
    pub fn n_camera_params(&self) -> usize {
        self.camera_block.nrows()
    }

    pub fn n_params(&self) -> usize {
        self.n_camera_params() + 3 * self.point_blocks.len()
    }

    pub fn full_matrix(&self) -> DMatrix<f64> {
        let mc = self.n_camera_params();
        let n = self.n_params();
        let mut h = DMatrix::zeros(n, n);
        h.view_mut((0, 0), (mc, mc)).copy_from(&self.camera_block);
        h.view_mut((0, mc), (mc, n - mc)).copy_from(&self.coupling);
        h.view_mut((mc, 0), (n - mc, mc))
            .copy_from(&self.coupling.transpose());
        for (i, blk) in self.point_blocks.iter().enumerate() {
            h.view_mut((mc + 3 * i, mc + 3 * i), (3, 3)).copy_from(blk);
        }
        h
    }

    pub fn gradient(&self) -> DVector<f64> {
        let mut g = DVector::zeros(self.n_params());
        g.rows_mut(0, self.n_camera_params())
            .copy_from(&self.gradient_cameras);
        g.rows_mut(self.n_camera_params(), self.gradient_points.len())
            .copy_from(&self.gradient_points);
        g
    }
}

pub fn build_normal_equations(
    r: &DVector<f64>,
    jac: &DMatrix<f64>,
    lambda1: f64,
    lambda2: f64,
    d_diag: &DVector<f64>,
    layout: ParameterLayout,
) -> Result<NormalEquations, BaError> {
    let n = layout.n_params();
    if jac.nrows() != r.len() || jac.ncols() != n || d_diag.len() != n {
        return Err(BaError::Shape(format!(
            "J {}x{}, r {}, D {}, parameters {}",
            jac.nrows(),
            jac.ncols(),
            r.len(),
            d_diag.len(),
            n
        )));
    }
    if !(lambda1 >= 0.0 && lambda2 >= 0.0) {
        return Err(BaError::NegativeDamping(lambda1, lambda2));
    }
    let mut h = jac.tr_mul(jac);
    for k in 0..n {
        h[(k, k)] += lambda1 * d_diag[k] * d_diag[k] + lambda2;
    }
    let g = jac.tr_mul(r);
    let mc = layout.n_camera_params();
    let point_blocks = (0..layout.n_points)
        .map(|i| h.fixed_view::<3, 3>(mc + 3 * i, mc + 3 * i).into_owned())
        .collect();
    Ok(NormalEquations {
        camera_block: h.view((0, 0), (mc, mc)).into_owned(),
        point_blocks,
        coupling: h.view((0, mc), (mc, n - mc)).into_owned(),
        gradient_cameras: g.rows(0, mc).into_owned(),
        gradient_points: g.rows(mc, n - mc).into_owned(),
    })
}

fn inverse_point_blocks(ne: &NormalEquations) -> Result<Vec<Matrix3<f64>>, BaError> {
    ne.point_blocks
        .iter()
        .enumerate()
        .map(|(i, b)| b.try_inverse().ok_or(BaError::SingularPointBlock(i)))
        .collect()
}

fn apply_block_diag(inv: &[Matrix3<f64>], v: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(v.len());
    for (i, b) in inv.iter().enumerate() {
        let seg = b * v.fixed_rows::<3>(3 * i);
        out.fixed_rows_mut::<3>(3 * i).copy_from(&seg);
    }
    out
}

/// Reduced camera system `S_c = B − E·C⁻¹·Eᵀ`, `rhs_c = g_c − E·C⁻¹·g_p`;
/// the camera step solves `S_c·δc = −rhs_c`.
pub fn schur_reduce(ne: &NormalEquations) -> Result<(DMatrix<f64>, DVector<f64>), BaError> {
    let inv = inverse_point_blocks(ne)?;
    let mc = ne.n_camera_params();
    // E·C⁻¹, block column by block column.
    let mut e_cinv = DMatrix::zeros(mc, ne.coupling.ncols());
    for (i, b) in inv.iter().enumerate() {
        let cols = ne.coupling.columns(3 * i, 3) * b;
        e_cinv.columns_mut(3 * i, 3).copy_from(&cols);
    }
    let s = &ne.camera_block - &e_cinv * ne.coupling.transpose();
    let rhs = &ne.gradient_cameras - &e_cinv * &ne.gradient_points;
    Ok(((&s + s.transpose()) * 0.5, rhs))
}

/// Point step `δp = −C⁻¹(g_p + Eᵀ·δc)`.
pub fn back_substitute(
    ne: &NormalEquations,
    camera_step: &DVector<f64>,
) -> Result<DVector<f64>, BaError> {
    let inv = inverse_point_blocks(ne)?;
    let rhs = &ne.gradient_points + ne.coupling.tr_mul(camera_step);
    Ok(-apply_block_diag(&inv, &rhs))
}

/// Concatenates camera and point steps into one parameter step.
pub fn join_step(camera_step: &DVector<f64>, point_step: &DVector<f64>) -> DVector<f64> {
    let mut d = DVector::zeros(camera_step.len() + point_step.len());
    d.rows_mut(0, camera_step.len()).copy_from(camera_step);
    d.rows_mut(camera_step.len(), point_step.len())
        .copy_from(point_step);
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_camera() -> Camera {
        Camera::new(UnitQuaternion::identity(), Vector3::zeros())
    }

    #[test]
    fn projection_examples() {
        let cam = identity_camera();
        assert_eq!(
            project(&cam, &Vector3::new(1.0, 2.0, 2.0)).unwrap(),
            Vector2::new(0.5, 1.0)
        );
        let mut shifted = cam.clone();
        shifted.principal_point = Vector2::new(0.3, -0.2);
        shifted.focal = 7.0;
        assert_eq!(
            project(&shifted, &Vector3::new(0.0, 0.0, 5.0)).unwrap(),
            Vector2::new(0.3, -0.2)
        );
        assert!(matches!(
            project(&cam, &Vector3::new(0.0, 0.0, -1.0)),
            Err(BaError::NonPositiveDepth { .. })
        ));
    }

    #[test]
    fn three_four_five_cost() {
        let cam = identity_camera();
        let x = Vector3::new(1.0, 2.0, 2.0);
        let scene = Scene {
            cameras: vec![cam],
            points: vec![x],
            observations: vec![Observation {
                camera: 0,
                point: 0,
                keypoint: Vector2::new(0.5 + 3.0, 1.0 + 4.0),
            }],
        };
        assert!((total_cost(&scene, &scene.ground_truth()).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn rodrigues_matches_quaternion_rotation() {
        let omega = Vector3::new(0.3, -0.7, 0.2);
        let v = Vector3::new(1.0, 2.0, -0.5);
        let got = rotate_axis_angle(&[omega.x, omega.y, omega.z], &[v.x, v.y, v.z]);
        let want = UnitQuaternion::from_scaled_axis(omega) * v;
        for i in 0..3 {
            assert!((got[i] - want[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn normal_equation_examples() {
        let layout = ParameterLayout {
            n_cameras: 1,
            n_points: 2,
        };
        let n = layout.n_params();
        let jac = DMatrix::<f64>::identity(n, n);
        let r = DVector::from_fn(n, |i, _| i as f64);
        let d = jacobian_scaling(&jac);
        let ne = build_normal_equations(&r, &jac, 0.0, 1.0, &d, layout).unwrap();
        assert_eq!(ne.full_matrix(), DMatrix::identity(n, n) * 2.0);
        assert_eq!(ne.gradient(), r);
        let ne = build_normal_equations(&r, &jac, 0.0, 0.0, &d, layout).unwrap();
        let step = ne.full_matrix().lu().solve(&-ne.gradient()).unwrap();
        assert_eq!(step, -r.clone());
        assert!(matches!(
            build_normal_equations(&r, &jac, -1.0, 0.0, &d, layout),
            Err(BaError::NegativeDamping(..))
        ));
        assert!(matches!(
            build_normal_equations(&r.rows(0, 3).into_owned(), &jac, 0.0, 0.0, &d, layout),
            Err(BaError::Shape(_))
        ));
    }

    #[test]
    fn schur_with_no_coupling_is_camera_block() {
        let layout = ParameterLayout {
            n_cameras: 1,
            n_points: 1,
        };
        let jac = DMatrix::from_fn(9, 9, |i, j| if i == j { 1.0 + i as f64 } else { 0.0 });
        let r = DVector::from_element(9, 1.0);
        let ne =
            build_normal_equations(&r, &jac, 0.5, 0.1, &jacobian_scaling(&jac), layout).unwrap();
        let (s, _) = schur_reduce(&ne).unwrap();
        assert_eq!(s, ne.camera_block);
    }

    #[test]
    fn singular_point_block_is_reported() {
        let layout = ParameterLayout {
            n_cameras: 1,
            n_points: 1,
        };
        let mut jac = DMatrix::<f64>::zeros(9, 9);
        jac.view_mut((0, 0), (6, 6)).fill_with_identity();
        let ne = build_normal_equations(
            &DVector::zeros(9),
            &jac,
            0.0,
            0.0,
            &DVector::from_element(9, 1.0),
            layout,
        )
        .unwrap();
        assert_eq!(schur_reduce(&ne), Err(BaError::SingularPointBlock(0)));
    }
}
