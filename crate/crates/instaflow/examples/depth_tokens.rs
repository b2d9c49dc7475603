//! Encodes projected-box corners into depth-order tokens: Fourier features
//! of the normalized [u, v, depth] rows through a small MLP, then fuses a
//! layout token grid with the tokens via cross-attention.

use instaflow::depth::{
    fourier_embed_scalar, normalized_corner_rows, DepthEncoder, DepthEncoderConfig, FourierSpec,
};
use instaflow::math::Vec3;
use instaflow::nn::Tensor;
use instaflow::projection::project_box;
use instaflow::scene::{Box3D, CameraIntrinsics, RigidPose};
use rand::SeedableRng;

fn main() {
    let spec = FourierSpec { num_bands: 4, base: 2.0, include_input: true };
    println!("Fourier features of 0.25 ({} per scalar):", spec.dim_per_scalar());
    println!("  {:?}", fourier_embed_scalar(0.25, &spec));
    println!("one box embeds into {} features\n", spec.box_dim());

    let k = CameraIntrinsics {
        fx: 400.0,
        fy: 400.0,
        cx: 224.0,
        cy: 128.0,
        width: 448,
        height: 256,
    };
    let config = DepthEncoderConfig { d_model: 16, fourier: spec, z_max: 80.0, residual: true };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let encoder = DepthEncoder::new(config, &mut rng);

    // Two cars at different depths become two depth tokens.
    let mut tokens = Vec::new();
    for (i, z) in [9.0, 25.0].iter().enumerate() {
        let b = Box3D {
            center: Vec3::new(1.0, 0.0, *z),
            size: [4.5, 1.9, 1.7],
            yaw: 0.3,
            class_id: 0,
            track_id: i as u64 + 1,
        };
        let pb = project_box(&b, &RigidPose::IDENTITY, &RigidPose::IDENTITY, &k);
        let rows = normalized_corner_rows(&pb, &k, encoder.config.z_max);
        let h = encoder.encode_box(&rows);
        println!(
            "box at {z} m -> token, first 4 dims: {:?}",
            h[..4].iter().map(|v| (v * 1000.0).round() / 1000.0).collect::<Vec<_>>()
        );
        tokens.extend(h);
    }
    let h_depth = Tensor::from_vec(&[2, 16], tokens);

    // Fuse a small layout token grid with the two depth tokens.
    let h_box = Tensor::randn(&[6, 16], 1.0, &mut rng);
    let fused = encoder.fuse(&h_box, &h_depth).unwrap();
    let delta: f64 = fused
        .data
        .iter()
        .zip(h_box.data.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    println!("\nfused 6 layout tokens with 2 depth tokens; residual delta norm {delta:.4}");

    // With no depth tokens the grid passes through untouched.
    let empty = encoder.fuse(&h_box, &Tensor::zeros(&[0, 16])).unwrap();
    println!("no depth tokens -> unchanged: {}", empty == h_box);
}
