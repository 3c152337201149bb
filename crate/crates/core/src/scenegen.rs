//! Procedural task-configuration generation: settle objects quasi-physically,
//! build Placing / Stacking / Shelving scenes, sample and filter prior
//! grasps, and expand them into task-oriented grasp records.

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::geometry::shapes::{box_mesh, cylinder, icosphere};
use crate::geometry::{
    meshes_collide, sample_surface, winding_number, MeshDistanceIndex, PointCloud, RigidPose,
    TriMesh,
};
use crate::hand::{forward_hand, HandModel, HandParams, NUM_JOINTS};
use crate::maps::{compute_contact_map, ContactMap, CONTACT_ALPHA, CONTACT_SATURATION};
use crate::sim::{integrate, ContactParams, Environment, RigidBodyState, SimBody};

/// Residual gap left between a settled object and its support so that
/// touching bodies never register as intersecting. Within the 1e-4 m
/// resting-contact band.
pub const SETTLE_CLEARANCE: f64 = 5e-5;

/// Default number of surface points per ground-truth contact map.
pub const MAP_POINTS: usize = 2048;

/// Grasp-filtering defaults (penetration volume in cm³, simulation
/// displacement in cm).
pub const FILTER_PV_CM3: f64 = 4.0;
pub const FILTER_SD_CM: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    EverydayObject,
    Brick,
    Shelf,
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Placing,
    Stacking,
    Shelving,
}

impl TaskKind {
    /// Stable lowercase identifier, matching the serialized form.
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Placing => "placing",
            TaskKind::Stacking => "stacking",
            TaskKind::Shelving => "shelving",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ObjectAsset {
    pub id: String,
    pub mesh: TriMesh,
    pub mass: f64,
    pub category: Category,
}

impl ObjectAsset {
    pub fn new(id: &str, mesh: TriMesh, mass: f64, category: Category) -> Result<Self> {
        if !mesh.is_watertight() {
            return Err(CoreError::NotWatertight);
        }
        let (lo, hi) = mesh.aabb();
        if (hi - lo).amax() > 0.5 {
            return Err(CoreError::InvalidArgument(format!(
                "asset {id} exceeds the 0.5 m extent bound"
            )));
        }
        if mass <= 0.0 {
            return Err(CoreError::InvalidArgument("mass must be positive".into()));
        }
        Ok(Self { id: id.to_string(), mesh, mass, category })
    }

    /// Largest vertex distance from the centroid.
    pub fn radius(&self) -> f64 {
        let c = self.mesh.centroid();
        self.mesh
            .vertices
            .iter()
            .map(|v| (v - c).norm())
            .fold(0.0, f64::max)
    }
}

pub struct Catalog {
    pub assets: Vec<ObjectAsset>,
}

impl Catalog {
    pub fn get(&self, id: &str) -> Result<&ObjectAsset> {
        self.assets
            .iter()
            .find(|a| a.id == id)
            .ok_or_else(|| CoreError::InvalidArgument(format!("unknown asset id {id}")))
    }

    pub fn of_category(&self, cat: Category) -> Vec<&ObjectAsset> {
        self.assets.iter().filter(|a| a.category == cat).collect()
    }
}

/// Small procedural stand-in catalog: everyday primitives plus bricks.
pub fn procedural_catalog() -> Catalog {
    let mut assets = Vec::new();
    let mut add = |id: &str, mesh: TriMesh, mass: f64, cat: Category| {
        assets.push(ObjectAsset::new(id, mesh, mass, cat).expect("procedural asset"));
    };
    add("box-small", box_mesh(Vector3::zeros(), Vector3::new(0.04, 0.04, 0.06)), 0.12, Category::EverydayObject);
    add("box-flat", box_mesh(Vector3::zeros(), Vector3::new(0.08, 0.05, 0.03)), 0.15, Category::EverydayObject);
    add("sphere", icosphere(Vector3::zeros(), 0.03, 2), 0.11, Category::EverydayObject);
    add("cylinder", cylinder(Vector3::new(0.0, 0.0, -0.035), 0.025, 0.07, 24), 0.13, Category::EverydayObject);
    add("box-tall", box_mesh(Vector3::zeros(), Vector3::new(0.03, 0.03, 0.08)), 0.14, Category::EverydayObject);
    add("brick-a", box_mesh(Vector3::zeros(), Vector3::new(0.06, 0.03, 0.02)), 0.10, Category::Brick);
    add("brick-b", box_mesh(Vector3::zeros(), Vector3::new(0.05, 0.025, 0.02)), 0.08, Category::Brick);
    add("brick-c", box_mesh(Vector3::zeros(), Vector3::new(0.04, 0.04, 0.025)), 0.09, Category::Brick);
    Catalog { assets }
}

/// Supporting geometry a scene rests on.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Support {
    Plane { z: f64 },
    Mesh(TriMesh),
}

impl Support {
    /// Height of the top resting surface.
    pub fn top_z(&self) -> f64 {
        match self {
            Support::Plane { z } => *z,
            Support::Mesh(m) => m.aabb().1.z,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneConfig {
    pub support: Support,
    /// (asset id, world pose) for every non-target object.
    pub obstacles: Vec<(String, RigidPose)>,
    pub target: (String, RigidPose),
}

impl SceneConfig {
    /// Re-validate the invariants: no obstacle collides with the target and
    /// every object rests on the support (or another object) within 1e-4 m.
    pub fn validate(&self, catalog: &Catalog) -> Result<()> {
        let target = catalog.get(&self.target.0)?;
        for (id, pose) in &self.obstacles {
            let obs = catalog.get(id)?;
            if meshes_collide(&target.mesh, &self.target.1, &obs.mesh, pose) {
                return Err(CoreError::InvalidArgument(format!(
                    "obstacle {id} collides with target {}",
                    self.target.0
                )));
            }
        }
        for (id, pose) in self.obstacles.iter().chain(std::iter::once(&self.target)) {
            let mesh = catalog.get(id)?.mesh.transformed(pose);
            let bottom = mesh.aabb().0.z;
            let mut rests = (bottom - self.support.top_z()).abs() <= 1e-4;
            // Stacked objects rest on another object's top face instead.
            if !rests {
                for (oid, opose) in &self.obstacles {
                    if oid == id {
                        continue;
                    }
                    let top = catalog.get(oid)?.mesh.transformed(opose).aabb().1.z;
                    if (bottom - top).abs() <= 1e-4 {
                        rests = true;
                        break;
                    }
                }
            }
            if !rests {
                return Err(CoreError::InvalidArgument(format!(
                    "object {id} does not rest on the support"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskConfig {
    pub kind: TaskKind,
    pub init: SceneConfig,
    pub goal: SceneConfig,
    /// Maps the init target pose to the goal target pose exactly.
    pub t_init_to_goal: RigidPose,
    pub seed: u64,
}

/// A prior grasp with its physical-quality annotations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnotatedGrasp {
    pub params: HandParams,
    pub pv_cm3: f64,
    pub sd_cm: f64,
}

/// A task-oriented grasp record: a filtered prior that survived the scene
/// collision checks of one task configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraspRecord {
    pub config_index: usize,
    pub params: HandParams,
    pub contact: ContactMap,
    pub pv_cm3: f64,
    pub sd_cm: f64,
    pub init_collision_free: bool,
    pub goal_collision_free: bool,
}

/// Drop the asset from `drop_height` above the support in its canonical
/// orientation (plus a small seeded tilt) and integrate until rest. The
/// returned pose has its residual contact penetration projected out, leaving
/// the object `SETTLE_CLEARANCE` above the support.
pub fn settle_object(
    asset: &ObjectAsset,
    support: &Support,
    drop_height: f64,
    duration: f64,
    seed: u64,
) -> Result<RigidPose> {
    if drop_height <= 0.0 {
        return Err(CoreError::InvalidArgument("drop_height must be > 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Seeded yaw only: the canonical asset orientation is already a resting
    // orientation, a random tilt would let friction freeze objects on an
    // edge.
    let yaw = rng.gen_range(0.0..std::f64::consts::TAU);
    let rotation = UnitQuaternion::from_scaled_axis(Vector3::z() * yaw);

    let body = SimBody::from_mesh(&asset.mesh, asset.mass)?;
    // Start with the rotated mesh's lowest vertex `drop_height` above the top
    // surface of the support.
    let rotated_lo = asset
        .mesh
        .vertices
        .iter()
        .map(|v| (rotation * (v - body.com_offset)).z)
        .fold(f64::INFINITY, f64::min);
    let top = support.top_z();
    let start_com_z = top + drop_height - rotated_lo;
    let env = match support {
        Support::Plane { z } => Environment { support_plane_z: Some(*z), static_mesh: None },
        Support::Mesh(m) => Environment { support_plane_z: None, static_mesh: Some(m) },
    };
    let initial = RigidBodyState {
        pose: RigidPose::new(rotation, Vector3::new(0.0, 0.0, start_com_z)),
        linear_velocity: Vector3::zeros(),
        angular_velocity: Vector3::zeros(),
    };
    let out = integrate(&body, &env, initial, duration, &ContactParams::default(), true);
    let com_pose = out.state.pose;

    // The simulated pose moves the COM frame; convert back to the asset's
    // native frame (vertex v maps to R·(v − com) + t).
    let translation = com_pose.translation - com_pose.rotation * body.com_offset;
    let mut pose = RigidPose::new(com_pose.rotation, translation);

    let settled_lo = asset
        .mesh
        .transformed(&pose)
        .aabb()
        .0
        .z;
    if settled_lo < top - drop_height.max(0.05) {
        return Err(CoreError::SettleFailed);
    }
    // Project residual spring penetration out of the contact.
    pose.translation.z += top + SETTLE_CLEARANCE - settled_lo;
    Ok(pose)
}

fn shelf_board() -> TriMesh {
    box_mesh(Vector3::new(0.0, 0.0, 0.30), Vector3::new(0.6, 0.3, 0.02))
}

struct Placement<'a> {
    catalog: &'a Catalog,
    rejections: usize,
}

impl<'a> Placement<'a> {
    fn reject(&mut self) -> Result<()> {
        self.rejections += 1;
        if self.rejections >= 100 {
            return Err(CoreError::NoValidConfiguration(self.rejections));
        }
        Ok(())
    }

    /// Place `count` obstacles in an annulus of radius 5–25 cm around the
    /// anchor points, resting on the support, rejecting collisions with the
    /// target and with already placed obstacles.
    fn place_obstacles(
        &mut self,
        rng: &mut ChaCha8Rng,
        pool: &[&ObjectAsset],
        count: usize,
        anchors: &[Vector3<f64>],
        support: &Support,
        target: (&ObjectAsset, &RigidPose),
        xy_range: (f64, f64),
    ) -> Result<Vec<(String, RigidPose)>> {
        let mut placed: Vec<(String, RigidPose)> = Vec::new();
        while placed.len() < count {
            let asset = pool[rng.gen_range(0..pool.len())];
            let anchor = anchors[rng.gen_range(0..anchors.len())];
            let r = rng.gen_range(0.05..0.25);
            let phi = rng.gen_range(0.0..std::f64::consts::TAU);
            let xy = Vector3::new(anchor.x + r * phi.cos(), anchor.y + r * phi.sin(), 0.0);
            if xy.x.abs() > xy_range.0 || xy.y.abs() > xy_range.1 {
                self.reject()?;
                continue;
            }
            let mut pose = settle_object(asset, support, 0.05, 3.0, rng.gen())?;
            pose.translation.x += xy.x;
            pose.translation.y += xy.y;
            let collides = meshes_collide(&asset.mesh, &pose, &target.0.mesh, target.1)
                || placed.iter().any(|(id, p)| {
                    let other = self.catalog.get(id).expect("placed id");
                    meshes_collide(&asset.mesh, &pose, &other.mesh, p)
                });
            if collides {
                self.reject()?;
                continue;
            }
            self.rejections = 0;
            placed.push((asset.id.clone(), pose));
        }
        Ok(placed)
    }
}

/// Generate one valid task configuration per the task recipe.
pub fn generate_config(kind: TaskKind, catalog: &Catalog, seed: u64) -> Result<TaskConfig> {
    generate_config_with_target(kind, catalog, None, seed)
}

/// Like [`generate_config`] but with the target asset pinned. The target
/// must belong to the task's target pool (bricks for stacking, everyday
/// objects otherwise).
pub fn generate_config_with_target(
    kind: TaskKind,
    catalog: &Catalog,
    target_id: Option<&str>,
    seed: u64,
) -> Result<TaskConfig> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut placement = Placement { catalog, rejections: 0 };
    let table = Support::Plane { z: 0.0 };

    let everyday = catalog.of_category(Category::EverydayObject);
    let bricks = catalog.of_category(Category::Brick);
    let (target_pool, obstacle_pool) = match kind {
        TaskKind::Stacking => (&bricks, &bricks),
        _ => (&everyday, &everyday),
    };
    if target_pool.is_empty() {
        return Err(CoreError::InvalidArgument(format!(
            "catalog has no assets for {kind:?}"
        )));
    }
    let target = match target_id {
        Some(id) => *target_pool
            .iter()
            .find(|a| a.id == id)
            .ok_or_else(|| {
                CoreError::InvalidArgument(format!(
                    "asset {id} is not a valid {kind:?} target"
                ))
            })?,
        None => target_pool[rng.gen_range(0..target_pool.len())],
    };

    let sample_xy = |rng: &mut ChaCha8Rng, half_x: f64, half_y: f64| {
        Vector3::new(rng.gen_range(-half_x..half_x), rng.gen_range(-half_y..half_y), 0.0)
    };
    let n_obstacles = rng.gen_range(2..=5);

    let (init, goal) = match kind {
        TaskKind::Placing => {
            let init_xy = sample_xy(&mut rng, 0.25, 0.25);
            let goal_xy = sample_xy(&mut rng, 0.25, 0.25);
            let mut init_pose = settle_object(target, &table, 0.10, 5.0, rng.gen())?;
            init_pose.translation += init_xy;
            let mut goal_pose = settle_object(target, &table, 0.10, 5.0, rng.gen())?;
            goal_pose.translation += goal_xy;
            let init_obs = placement.place_obstacles(
                &mut rng,
                obstacle_pool,
                n_obstacles,
                &[init_xy],
                &table,
                (target, &init_pose),
                (0.45, 0.45),
            )?;
            let goal_obs = placement.place_obstacles(
                &mut rng,
                obstacle_pool,
                n_obstacles,
                &[goal_xy],
                &table,
                (target, &goal_pose),
                (0.45, 0.45),
            )?;
            (
                SceneConfig { support: table.clone(), obstacles: init_obs, target: (target.id.clone(), init_pose) },
                SceneConfig { support: table.clone(), obstacles: goal_obs, target: (target.id.clone(), goal_pose) },
            )
        }
        TaskKind::Stacking => {
            let base = bricks[rng.gen_range(0..bricks.len())];
            let base_xy = sample_xy(&mut rng, 0.2, 0.2);
            let init_xy = sample_xy(&mut rng, 0.2, 0.2);
            let mut base_pose = settle_object(base, &table, 0.05, 3.0, rng.gen())?;
            base_pose.translation += base_xy;
            let mut init_pose = settle_object(target, &table, 0.05, 3.0, rng.gen())?;
            init_pose.translation += init_xy;
            if meshes_collide(&base.mesh, &base_pose, &target.mesh, &init_pose) {
                return generate_config_with_target(
                    kind,
                    catalog,
                    target_id,
                    seed.wrapping_add(0x9e3779b97f4a7c15),
                );
            }
            // Goal: place the target directly on the base brick's top face
            // and settle onto it.
            let base_top = base.mesh.transformed(&base_pose).aabb().1.z;
            let mut goal_pose =
                settle_object(target, &Support::Plane { z: base_top }, 0.02, 3.0, rng.gen())?;
            goal_pose.translation.x += base_pose.translation.x + base.mesh.centroid().x;
            goal_pose.translation.y += base_pose.translation.y + base.mesh.centroid().y;
            let init_obs = vec![(base.id.clone(), base_pose.clone())];
            let goal_obs = vec![(base.id.clone(), base_pose)];
            (
                SceneConfig { support: table.clone(), obstacles: init_obs, target: (target.id.clone(), init_pose) },
                SceneConfig { support: table.clone(), obstacles: goal_obs, target: (target.id.clone(), goal_pose) },
            )
        }
        TaskKind::Shelving => {
            let shelf = Support::Mesh(shelf_board());
            let init_xy = sample_xy(&mut rng, 0.25, 0.25);
            let goal_xy = sample_xy(&mut rng, 0.18, 0.08);
            let mut init_pose = settle_object(target, &table, 0.05, 5.0, rng.gen())?;
            init_pose.translation += init_xy;
            let mut goal_pose = settle_object(target, &shelf, 0.05, 5.0, rng.gen())?;
            goal_pose.translation += goal_xy;
            let init_obs = placement.place_obstacles(
                &mut rng,
                obstacle_pool,
                n_obstacles,
                &[init_xy],
                &table,
                (target, &init_pose),
                (0.45, 0.45),
            )?;
            let goal_obs = placement.place_obstacles(
                &mut rng,
                obstacle_pool,
                n_obstacles,
                &[goal_xy],
                &shelf,
                (target, &goal_pose),
                (0.55, 0.25),
            )?;
            (
                SceneConfig { support: table.clone(), obstacles: init_obs, target: (target.id.clone(), init_pose) },
                SceneConfig { support: shelf, obstacles: goal_obs, target: (target.id.clone(), goal_pose) },
            )
        }
    };

    let t_init_to_goal = goal.target.1.compose(&init.target.1.inverse());
    let config = TaskConfig { kind, init, goal, t_init_to_goal, seed };
    config.init.validate(catalog)?;
    config.goal.validate(catalog)?;
    Ok(config)
}

/// One representative fingertip vertex per leaf joint: the vertex with the
/// largest skinning weight for that joint (lowest index on ties).
pub fn fingertip_vertices(model: &HandModel) -> Vec<usize> {
    let mut is_parent = [false; NUM_JOINTS];
    for &p in &model.parents {
        if p >= 0 {
            is_parent[p as usize] = true;
        }
    }
    (0..NUM_JOINTS)
        .filter(|&j| !is_parent[j] && model.parents[j] >= 0)
        .map(|j| {
            let mut best = 0;
            for (v, w) in model.skinning_weights.iter().enumerate() {
                if w[j] > model.skinning_weights[best][j] {
                    best = v;
                }
            }
            best
        })
        .collect()
}

/// Shortest distance from the (subsampled) hand surface to the object.
fn hand_object_distance(
    model: &HandModel,
    params: &HandParams,
    object: &TriMesh,
) -> Result<f64> {
    let hand = forward_hand(model, params)?;
    let mut best = f64::INFINITY;
    for v in hand.vertices().iter().step_by(4) {
        best = best.min(object.distance_to_surface(v));
    }
    Ok(best)
}

pub fn clamp_joint_limits(params: &mut HandParams) {
    for j in 0..NUM_JOINTS {
        let aa = params.joint_rotation(j);
        let n = aa.norm();
        if n > std::f64::consts::PI {
            let scaled = aa * (std::f64::consts::PI / n);
            params.theta[3 * j] = scaled.x;
            params.theta[3 * j + 1] = scaled.y;
            params.theta[3 * j + 2] = scaled.z;
        }
    }
}

/// Heuristic prior-grasp sampler. The hand's digits extend along local +z
/// with three bend stations along them. Each candidate approaches from a
/// random side with the digit axis biased downward and the palm facing the
/// object, translates in until first touch, then curls station by station
/// until contact, so the curled distal hand hooks under the object and
/// carries its weight geometrically. Candidates without opposed contact
/// directions or without a contact below the centroid are rejected.
pub fn sample_prior_grasps(
    asset: &ObjectAsset,
    model: &HandModel,
    n: usize,
    seed: u64,
) -> Result<Vec<HandParams>> {
    if n == 0 {
        return Err(CoreError::InvalidArgument("n must be >= 1".into()));
    }
    let centroid = asset.mesh.centroid();
    let radius = asset.radius();
    let bounds = asset.mesh.aabb();
    let aabb = (&bounds.0, &bounds.1);
    // The simulator's contact points for this object: mesh vertices plus
    // the same deterministic surface samples `SimBody::from_mesh` adds.
    let sim_points: Vec<Vector3<f64>> = asset
        .mesh
        .vertices
        .iter()
        .cloned()
        .chain(sample_surface(&asset.mesh, 500, 0)?.points)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut failures = 0;
    let mut attempts = 0;
    let max_attempts = 12 * n;
    while out.len() < n && attempts < max_attempts {
        attempts += 1;
        // Mostly-horizontal approach direction (normalized Gaussian with
        // the vertical component damped), so the downward digit bias below
        // stays well-defined.
        let mut u = Vector3::new(
            rng.gen::<f64>() * 2.0 - 1.0,
            rng.gen::<f64>() * 2.0 - 1.0,
            (rng.gen::<f64>() * 2.0 - 1.0) * 0.4,
        );
        if u.norm() < 1e-3 {
            u = Vector3::x();
        }
        u.normalize_mut();
        // Digit direction: horizontal, perpendicular to the approach,
        // with a mild random tilt; the wrap pinches the object around its
        // waist and must stay clear of whatever it rests on.
        let down = Vector3::new(0.0, 0.0, -1.0);
        let side = u.cross(&down).normalize() * if rng.gen::<bool>() { 1.0 } else { -1.0 };
        let mut t = side + down * (rng.gen::<f64>() - 0.5) * 0.5;
        t -= u * t.dot(&u);
        t.normalize_mut();
        // Orientation: digits (+z) along t, local +y outward along u, so a
        // positive curl about local x bends the distal hand toward and
        // then under the object.
        let rot = nalgebra::Rotation3::from_matrix_unchecked(
            nalgebra::Matrix3::from_columns(&[u.cross(&t), u, t]),
        );
        let global = UnitQuaternion::from_rotation_matrix(&rot);
        let mut params = HandParams::default();
        let aa = global.scaled_axis();
        params.theta[0] = aa.x;
        params.theta[1] = aa.y;
        params.theta[2] = aa.z;
        // Place the wrist so the wrap centers on the lower half of the
        // object: the distal stations hook past small objects while the
        // proximal tube still covers enough of a tall shaft to resist
        // tipping.
        let extent_t = {
            let (lo, hi) = asset.mesh.aabb();
            let mut m = 0.0_f64;
            for ix in 0..2 {
                for iy in 0..2 {
                    for iz in 0..2 {
                        let c = Vector3::new(
                            if ix == 0 { lo.x } else { hi.x },
                            if iy == 0 { lo.y } else { hi.y },
                            if iz == 0 { lo.z } else { hi.z },
                        );
                        m = m.max((c - centroid).dot(&t));
                    }
                }
            }
            m
        };
        let standoff = radius + 0.04;
        let wrist = centroid + u * standoff + t * (extent_t - 0.105).clamp(-0.045, 0.04);
        params.theta[48] = wrist.x;
        params.theta[49] = wrist.y;
        params.theta[50] = wrist.z;

        // Approach: translate inward until first touch.
        let mut touched = false;
        for _ in 0..60 {
            let d = hand_object_distance(model, &params, &asset.mesh)?;
            if d <= 0.0005 {
                touched = true;
                break;
            }
            let step = (d * 0.8).clamp(0.0005, 0.01);
            params.theta[48] -= step * u.x;
            params.theta[49] -= step * u.y;
            params.theta[50] -= step * u.z;
        }
        if !touched || penetration_sum(model, &params, &asset.mesh, aabb)? > 1e-6 {
            failures += 1;
            continue;
        }

        // Squeeze cycles: alternate closing the wrap and re-centering it.
        // Closure curls every chain together, station by station from
        // proximal to distal, stopping a station only when curling further
        // would press too hard into the object. Balance then shifts the
        // wrist until the penetration-weighted shell push directions
        // roughly cancel: a wrap that engages mostly one side has no
        // opposed preload for friction to draw on, and its net shell push
        // walks the object out of the pocket.
        let margin = ContactParams::default().margin;
        let mut balanced = false;
        for _ in 0..3 {
            for link in 0..3 {
                let base = penetration_sum(model, &params, &asset.mesh, aabb)?;
                let mut angle = 0.0_f64;
                while angle < 2.2 {
                    let mut cand = params;
                    for chain in 0..5 {
                        cand.theta[3 * (1 + chain * 3 + link)] += 0.02;
                    }
                    let pen = penetration_sum(model, &cand, &asset.mesh, aabb)?;
                    if pen > base + 8e-4 || pen > 5e-3 {
                        break;
                    }
                    params = cand;
                    angle += 0.02;
                }
            }
            for _ in 0..40 {
                let hand = forward_hand(model, &params)?;
                let index = MeshDistanceIndex::new(&hand.mesh);
                let (net, total) = shell_balance(&index, &sim_points, margin);
                if total < 1e-4 {
                    balanced = false;
                    break;
                }
                if net.norm() / total < 0.25 {
                    balanced = total > 0.006;
                    break;
                }
                let shift = net.normalize() * 0.0003;
                params.theta[48] -= shift.x;
                params.theta[49] -= shift.y;
                params.theta[50] -= shift.z;
            }
            if balanced {
                break;
            }
        }
        if !balanced {
            failures += 1;
            continue;
        }

        // Accept only candidates that can actually carry the object:
        // opposed contact directions.
        let hand = forward_hand(model, &params)?;
        let mut dirs: Vec<Vector3<f64>> = Vec::new();
        for v in hand.vertices().iter().step_by(2) {
            if asset.mesh.distance_to_surface(v) <= 0.004 {
                let d = v - centroid;
                if d.norm() > 1e-9 {
                    dirs.push(d.normalize());
                }
            }
        }
        let opposed = dirs
            .iter()
            .enumerate()
            .any(|(i, a)| dirs.iter().skip(i + 1).any(|b| a.dot(b) < -0.2));
        if dirs.len() >= 3 && opposed && params.is_finite() {
            out.push(params);
        } else {
            failures += 1;
        }
    }
    if out.len() < n {
        return Err(CoreError::OptimizerFailed { failures, attempts });
    }
    Ok(out)
}

/// Penetration-weighted net push direction and total shell engagement of
/// the object's simulator contact points against the hand, under the
/// solver's shell model. Normals come from the gradient of the
/// hand-surface distance field and point from the hand into the object.
fn shell_balance(
    hand: &MeshDistanceIndex,
    points: &[Vector3<f64>],
    margin: f64,
) -> (Vector3<f64>, f64) {
    let h = 1e-4;
    // Any point engaged in the shell has neighbors at offset `h` closer
    // than this, so the gradient probes always resolve.
    let reach = margin + 2.0 * h;
    let dist = |p: &Vector3<f64>| hand.distance_within(p, reach).unwrap_or(reach);
    let mut net = Vector3::zeros();
    let mut total = 0.0;
    for p in points {
        let d = dist(p);
        if d < margin {
            let g = Vector3::new(
                dist(&(p + Vector3::x() * h)) - dist(&(p - Vector3::x() * h)),
                dist(&(p + Vector3::y() * h)) - dist(&(p - Vector3::y() * h)),
                dist(&(p + Vector3::z() * h)) - dist(&(p - Vector3::z() * h)),
            );
            if g.norm() > 1e-9 {
                let pen = margin - d;
                net += g.normalize() * pen;
                total += pen;
            }
        }
    }
    (net, total)
}

/// Summed depth of subsampled hand vertices inside the object.
fn penetration_sum(
    model: &HandModel,
    params: &HandParams,
    object: &TriMesh,
    aabb: (&Vector3<f64>, &Vector3<f64>),
) -> Result<f64> {
    let hand = forward_hand(model, params)?;
    let (lo, hi) = aabb;
    let mut penetration = 0.0;
    for v in hand.vertices().iter().step_by(4) {
        if v.x < lo.x || v.y < lo.y || v.z < lo.z || v.x > hi.x || v.y > hi.y || v.z > hi.z {
            continue;
        }
        if winding_number(object, v) > 0.5 {
            penetration += object.distance_to_surface(v);
        }
    }
    Ok(penetration)
}

/// Annotate grasps with penetration volume and simulation displacement and
/// keep those under both thresholds.
pub fn filter_grasps(
    grasps: &[HandParams],
    asset: &ObjectAsset,
    model: &HandModel,
    pv_threshold_cm3: f64,
    sd_threshold_cm: f64,
) -> Result<Vec<AnnotatedGrasp>> {
    if pv_threshold_cm3 <= 0.0 || sd_threshold_cm <= 0.0 {
        return Err(CoreError::InvalidArgument("thresholds must be > 0".into()));
    }
    let mut out = Vec::new();
    for params in grasps {
        let hand = forward_hand(model, params)?;
        let sealed = hand.sealed_mesh()?;
        let pv = crate::geometry::overlap_volume(&sealed, &asset.mesh, 0.001)?;
        let sd = crate::metrics::simulation_displacement(
            &hand,
            asset,
            &RigidPose::identity(),
            1.0,
        )?;
        if pv <= pv_threshold_cm3 && sd <= sd_threshold_cm {
            out.push(AnnotatedGrasp { params: *params, pv_cm3: pv, sd_cm: sd });
        }
    }
    Ok(out)
}

/// True when the hand (posed in the target's frame) is collision-free
/// against every non-target object and the support in `scene`.
pub fn hand_clear_of_scene(
    hand_mesh: &TriMesh,
    scene: &SceneConfig,
    catalog: &Catalog,
) -> Result<bool> {
    let target_pose = &scene.target.1;
    for (id, pose) in &scene.obstacles {
        let obs = catalog.get(id)?;
        if meshes_collide(hand_mesh, target_pose, &obs.mesh, pose) {
            return Ok(false);
        }
    }
    match &scene.support {
        Support::Plane { z } => {
            let world = hand_mesh.transformed(target_pose);
            if world.aabb().0.z < *z {
                return Ok(false);
            }
        }
        Support::Mesh(m) => {
            if meshes_collide(hand_mesh, target_pose, m, &RigidPose::identity()) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Expand filtered priors across task configurations: keep (config, prior)
/// pairs whose hand is collision-free in both scenes and attach the
/// ground-truth contact map.
pub fn expand_dataset(
    priors: &[AnnotatedGrasp],
    configs: &[TaskConfig],
    catalog: &Catalog,
    model: &HandModel,
    map_points: usize,
    seed: u64,
) -> Result<Vec<GraspRecord>> {
    if priors.is_empty() || configs.is_empty() {
        return Err(CoreError::InvalidArgument(
            "expand_dataset needs non-empty priors and configs".into(),
        ));
    }
    let mut records = Vec::new();
    for (ci, config) in configs.iter().enumerate() {
        let asset = catalog.get(&config.init.target.0)?;
        let object_points = sample_surface(&asset.mesh, map_points, seed ^ ci as u64)?;
        for prior in priors {
            let hand = forward_hand(model, &prior.params)?;
            let init_free = hand_clear_of_scene(&hand.mesh, &config.init, catalog)?;
            // At the goal the grasp moves rigidly with the object; posing
            // the same asset-frame hand at the goal target pose is exactly
            // the T_init→goal transform of the init grasp.
            let goal_free = hand_clear_of_scene(&hand.mesh, &config.goal, catalog)?;
            if !(init_free && goal_free) {
                continue;
            }
            let hand_cloud = PointCloud::new(hand.vertices().to_vec())?;
            let contact = compute_contact_map(
                &object_points,
                &hand_cloud,
                CONTACT_ALPHA,
                CONTACT_SATURATION,
            )?;
            records.push(GraspRecord {
                config_index: ci,
                params: prior.params,
                contact,
                pv_cm3: prior.pv_cm3,
                sd_cm: prior.sd_cm,
                init_collision_free: init_free,
                goal_collision_free: goal_free,
            });
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hand::synthetic_hand_model;

    #[test]
    fn cube_settles_flat_on_plane() {
        let cube = ObjectAsset::new(
            "cube",
            box_mesh(Vector3::zeros(), Vector3::repeat(0.01)),
            0.1,
            Category::EverydayObject,
        )
        .unwrap();
        let pose = settle_object(&cube, &Support::Plane { z: 0.0 }, 0.1, 5.0, 3).unwrap();
        let settled = cube.mesh.transformed(&pose);
        let (lo, hi) = settled.aabb();
        assert!(lo.z.abs() <= 1e-4, "bottom at {}", lo.z);
        // Flat face down: the AABB height equals the edge length.
        assert!((hi.z - lo.z - 0.01).abs() < 1e-4, "height {}", hi.z - lo.z);
    }

    #[test]
    fn sphere_settles_at_radius() {
        let sphere = ObjectAsset::new(
            "s",
            icosphere(Vector3::zeros(), 0.03, 2),
            0.1,
            Category::EverydayObject,
        )
        .unwrap();
        let pose = settle_object(&sphere, &Support::Plane { z: 0.0 }, 0.05, 5.0, 4).unwrap();
        assert!((pose.apply(&Vector3::zeros()).z - 0.03).abs() < 1e-3);
    }

    #[test]
    fn settle_is_deterministic() {
        let cat = procedural_catalog();
        let a = settle_object(cat.get("box-flat").unwrap(), &Support::Plane { z: 0.0 }, 0.1, 5.0, 9)
            .unwrap();
        let b = settle_object(cat.get("box-flat").unwrap(), &Support::Plane { z: 0.0 }, 0.1, 5.0, 9)
            .unwrap();
        assert_eq!(a.translation, b.translation);
        assert_eq!(a.rotation, b.rotation);
    }

    #[test]
    fn placing_config_is_valid_and_deterministic() {
        let cat = procedural_catalog();
        let a = generate_config(TaskKind::Placing, &cat, 42).unwrap();
        a.init.validate(&cat).unwrap();
        a.goal.validate(&cat).unwrap();
        let b = generate_config(TaskKind::Placing, &cat, 42).unwrap();
        assert_eq!(a.init.target.1.translation, b.init.target.1.translation);
        assert_eq!(a.goal.target.1.translation, b.goal.target.1.translation);
        assert_eq!(a.init.obstacles.len(), b.init.obstacles.len());
        // T maps the init target pose to the goal target pose exactly.
        let mapped = a.t_init_to_goal.compose(&a.init.target.1);
        assert!((mapped.translation - a.goal.target.1.translation).norm() < 1e-12);
    }

    #[test]
    fn stacking_goal_rests_on_base() {
        let cat = procedural_catalog();
        let config = generate_config(TaskKind::Stacking, &cat, 7).unwrap();
        let target = cat.get(&config.goal.target.0).unwrap();
        let stacked = target.mesh.transformed(&config.goal.target.1);
        let (base_id, base_pose) = &config.goal.obstacles[0];
        let base = cat.get(base_id).unwrap().mesh.transformed(base_pose);
        assert!((stacked.aabb().0.z - base.aabb().1.z).abs() < 1e-3);
    }

    #[test]
    fn shelving_goal_rests_on_shelf() {
        let cat = procedural_catalog();
        let config = generate_config(TaskKind::Shelving, &cat, 11).unwrap();
        let target = cat.get(&config.goal.target.0).unwrap();
        let bottom = target.mesh.transformed(&config.goal.target.1).aabb().0.z;
        assert!((bottom - config.goal.support.top_z()).abs() <= 1e-4);
    }

    #[test]
    fn prior_grasps_touch_sphere_and_are_deterministic() {
        let model = synthetic_hand_model(0);
        let sphere = ObjectAsset::new(
            "s",
            icosphere(Vector3::zeros(), 0.03, 2),
            0.1,
            Category::EverydayObject,
        )
        .unwrap();
        let grasps = sample_prior_grasps(&sphere, &model, 3, 5).unwrap();
        assert_eq!(grasps.len(), 3);
        for g in &grasps {
            assert!(g.is_finite());
            for j in 0..NUM_JOINTS {
                assert!(g.joint_rotation(j).norm() <= std::f64::consts::PI + 1e-12);
            }
            // The wrap touches the sphere with opposed contact directions.
            let hand = forward_hand(&model, g).unwrap();
            let centroid = sphere.mesh.centroid();
            let dirs: Vec<_> = hand
                .vertices()
                .iter()
                .filter(|v| sphere.mesh.distance_to_surface(v) <= 0.004)
                .map(|v| (v - centroid).normalize())
                .collect();
            assert!(dirs.len() >= 3, "only {} contacts", dirs.len());
            let opposed = dirs
                .iter()
                .enumerate()
                .any(|(i, a)| dirs.iter().skip(i + 1).any(|b| a.dot(b) < -0.2));
            assert!(opposed);
        }
        let again = sample_prior_grasps(&sphere, &model, 3, 5).unwrap();
        for (a, b) in grasps.iter().zip(&again) {
            assert_eq!(a.theta, b.theta);
        }
    }

    #[test]
    fn filter_applies_both_thresholds() {
        // Constructed annotations exercised through the public threshold
        // logic: a far-away hand passes trivially (PV = 0, SD large is
        // impossible without contact, so drop through free fall instead).
        let model = synthetic_hand_model(0);
        let sphere = ObjectAsset::new(
            "s",
            icosphere(Vector3::zeros(), 0.03, 2),
            0.1,
            Category::EverydayObject,
        )
        .unwrap();
        // A hand far from the object: PV = 0 but the object free-falls,
        // so SD is huge and the grasp is rejected.
        let mut far = HandParams::default();
        far.theta[50] = 10.0;
        let kept = filter_grasps(&[far], &sphere, &model, 4.0, 3.0).unwrap();
        assert!(kept.is_empty());
        // Empty input stays empty.
        assert!(filter_grasps(&[], &sphere, &model, 4.0, 3.0).unwrap().is_empty());
    }

    #[test]
    fn expand_rejects_colliding_scene_and_accepts_free_scene() {
        let model = synthetic_hand_model(0);
        let cat = procedural_catalog();
        let sphere = cat.get("sphere").unwrap();
        let grasps = sample_prior_grasps(sphere, &model, 1, 5).unwrap();
        let prior = AnnotatedGrasp { params: grasps[0], pv_cm3: 0.0, sd_cm: 0.0 };
        let table = Support::Plane { z: -10.0 };
        let empty_scene = SceneConfig {
            support: table.clone(),
            obstacles: vec![],
            target: (sphere.id.clone(), RigidPose::identity()),
        };
        let free = TaskConfig {
            kind: TaskKind::Placing,
            init: empty_scene.clone(),
            goal: empty_scene.clone(),
            t_init_to_goal: RigidPose::identity(),
            seed: 0,
        };
        let records = expand_dataset(&[prior.clone()], &[free.clone()], &cat, &model, 128, 0).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].contact.values.len(), 128);
        assert!(records[0].contact.values.iter().all(|&v| (0.0..=1.0).contains(&v)));

        // Put a huge obstacle box over the whole grasp volume at the goal.
        let mut blocked = free;
        blocked.goal.obstacles.push((
            "box-flat".to_string(),
            RigidPose::from_translation(
                forward_hand(&model, &prior.params).unwrap().vertices()[0],
            ),
        ));
        let records = expand_dataset(&[prior], &[blocked], &cat, &model, 128, 0).unwrap();
        assert!(records.is_empty());
    }
}
