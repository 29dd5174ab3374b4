//! Line-oriented text format for generated problems.
//!
//! ```text
//! # qlma scene v1
//! camera <j> <qw> <qx> <qy> <qz> <cx> <cy> <cz> <focal> <ppx> <ppy>
//! point <i> <x> <y> <z>
//! observation <camera> <point> <u> <v>
//! init_camera <j> ...         (same fields as camera)
//! init_point <i> <x> <y> <z>
//! source <i> <x> <y> <z>
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. Records of each
//! kind must appear with consecutive indices starting at 0. Numbers use the
//! shortest representation that parses back to the identical `f64`.

use std::fmt::Write;

use nalgebra::{Quaternion, UnitQuaternion, Vector2, Vector3};

use super::generate::BaProblem;
use super::{BaError, Camera, Estimate, Observation, Scene};

const HEADER: &str = "# qlma scene v1
# camera <j> <qw> <qx> <qy> <qz> <cx> <cy> <cz> <focal> <ppx> <ppy>
# point <i> <x> <y> <z>
# observation <camera> <point> <u> <v>
# init_camera / init_point: initial guess, same fields
# source <i> <x> <y> <z>: position each keypoint was projected from
";

fn camera_fields(c: &Camera) -> String {
    let q = c.orientation.quaternion();
    format!(
        "{} {} {} {} {} {} {} {} {} {}",
        q.w,
        q.i,
        q.j,
        q.k,
        c.position.x,
        c.position.y,
        c.position.z,
        c.focal,
        c.principal_point.x,
        c.principal_point.y
    )
}

pub fn write_problem(p: &BaProblem) -> String {
    let mut s = String::from(HEADER);
    for (j, c) in p.scene.cameras.iter().enumerate() {
        writeln!(s, "camera {j} {}", camera_fields(c)).unwrap();
    }
    for (i, x) in p.scene.points.iter().enumerate() {
        writeln!(s, "point {i} {} {} {}", x.x, x.y, x.z).unwrap();
    }
    for o in &p.scene.observations {
        writeln!(
            s,
            "observation {} {} {} {}",
            o.camera, o.point, o.keypoint.x, o.keypoint.y
        )
        .unwrap();
    }
    for (j, c) in p.initial.cameras.iter().enumerate() {
        writeln!(s, "init_camera {j} {}", camera_fields(c)).unwrap();
    }
    for (i, x) in p.initial.points.iter().enumerate() {
        writeln!(s, "init_point {i} {} {} {}", x.x, x.y, x.z).unwrap();
    }
    for (i, x) in p.sources.iter().enumerate() {
        writeln!(s, "source {i} {} {} {}", x.x, x.y, x.z).unwrap();
    }
    s
}

struct Fields<'a> {
    line: usize,
    parts: std::str::SplitWhitespace<'a>,
}

impl Fields<'_> {
    fn err(&self, message: impl Into<String>) -> BaError {
        BaError::Parse {
            line: self.line,
            message: message.into(),
        }
    }

    fn f64(&mut self) -> Result<f64, BaError> {
        let tok = self.parts.next().ok_or_else(|| self.err("missing field"))?;
        tok.parse()
            .map_err(|_| self.err(format!("bad number {tok:?}")))
    }

    fn index(&mut self) -> Result<usize, BaError> {
        let tok = self.parts.next().ok_or_else(|| self.err("missing index"))?;
        tok.parse()
            .map_err(|_| self.err(format!("bad index {tok:?}")))
    }

    fn vec3(&mut self) -> Result<Vector3<f64>, BaError> {
        Ok(Vector3::new(self.f64()?, self.f64()?, self.f64()?))
    }

    fn camera(&mut self) -> Result<Camera, BaError> {
        let q = Quaternion::new(self.f64()?, self.f64()?, self.f64()?, self.f64()?);
        if (q.norm() - 1.0).abs() > 1e-9 {
            return Err(self.err("quaternion is not unit length"));
        }
        Ok(Camera {
            orientation: UnitQuaternion::new_unchecked(q),
            position: self.vec3()?,
            focal: self.f64()?,
            principal_point: Vector2::new(self.f64()?, self.f64()?),
        })
    }

    fn finish(mut self) -> Result<(), BaError> {
        match self.parts.next() {
            Some(tok) => Err(self.err(format!("unexpected trailing field {tok:?}"))),
            None => Ok(()),
        }
    }
}

fn push_indexed<'a, T>(
    f: &mut Fields<'a>,
    list: &mut Vec<T>,
    item: impl FnOnce(&mut Fields<'a>) -> Result<T, BaError>,
) -> Result<(), BaError> {
    let idx = f.index()?;
    if idx != list.len() {
        return Err(f.err(format!("expected index {}, found {idx}", list.len())));
    }
    list.push(item(f)?);
    Ok(())
}

pub fn parse_problem(text: &str) -> Result<BaProblem, BaError> {
    let (mut cameras, mut points, mut observations) = (Vec::new(), Vec::new(), Vec::new());
    let (mut init_cameras, mut init_points, mut sources) = (Vec::new(), Vec::new(), Vec::new());
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let tag = parts.next().unwrap_or_default();
        let mut f = Fields { line: n + 1, parts };
        match tag {
            "camera" => push_indexed(&mut f, &mut cameras, Fields::camera)?,
            "point" => push_indexed(&mut f, &mut points, Fields::vec3)?,
            "init_camera" => push_indexed(&mut f, &mut init_cameras, Fields::camera)?,
            "init_point" => push_indexed(&mut f, &mut init_points, Fields::vec3)?,
            "source" => push_indexed(&mut f, &mut sources, Fields::vec3)?,
            "observation" => {
                let camera = f.index()?;
                let point = f.index()?;
                let keypoint = Vector2::new(f.f64()?, f.f64()?);
                observations.push(Observation {
                    camera,
                    point,
                    keypoint,
                });
            }
            other => return Err(f.err(format!("unknown record {other:?}"))),
        }
        f.finish()?;
    }
    let scene = Scene {
        cameras,
        points,
        observations,
    };
    scene.validate()?;
    if init_cameras.len() != scene.cameras.len() || init_points.len() != scene.points.len() {
        return Err(BaError::Shape("initial guess does not match scene".into()));
    }
    if sources.is_empty() {
        sources = scene.points.clone();
    }
    Ok(BaProblem {
        scene,
        initial: Estimate {
            cameras: init_cameras,
            points: init_points,
        },
        sources,
    })
}
