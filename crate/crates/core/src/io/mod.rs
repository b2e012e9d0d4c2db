//! File interchange and synthetic fixtures.

pub mod camera;
pub mod image;
pub mod ply;
pub mod sidecar;
pub mod synth;

pub use self::camera::{read_cameras, write_cameras, Camera, CameraRecord};
pub use self::image::{read_image, write_image, ImageBuffer};
pub use self::ply::{encode_ply, read_ply, write_ply};
pub use self::sidecar::{read_scores, sidecar_path, write_scores};
pub use self::synth::{ring_cameras, synth_scene, SynthParams};
