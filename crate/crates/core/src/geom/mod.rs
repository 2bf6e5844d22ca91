//! Geometric types shared by the whole pipeline: vectors and rigid
//! transforms, pinhole cameras and rays, triangle meshes with PLY IO, sampling
//! lattices, images and spatial search structures.

pub mod camera;
pub mod capsule;
pub mod image;
pub mod mesh;
pub mod ply;
pub mod spatial;
pub mod vec;
pub mod voxel;

pub use capsule::Capsule;
pub use camera::{load_cameras, save_cameras, Camera, CameraRecord, Ray};
pub use image::RgbImage;
pub use mesh::{AreaSampler, Label, SurfaceSample, TriMesh};
pub use ply::{load_mesh, read_ply, save_mesh, write_ply};
pub use spatial::{ClosestPoint, KdTree, TriangleTree};
pub use vec::{Mat3, Rigid, Vec2, Vec3};
pub use voxel::{GridSpec, VoxelGrid};
