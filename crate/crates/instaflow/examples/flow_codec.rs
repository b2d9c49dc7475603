//! Round-trips a random displacement field through the RGB flow codec and
//! reports the quantization error against the range/127 bound, then shows
//! the mock autoencoder shrinking the image 8x into a 4-channel latent.

use instaflow::flow::{encode_motion_latent, flow_to_rgb, rgb_to_flow, MotionMap};
use rand::{Rng, SeedableRng};

fn main() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let range = 10.0;
    let mut map = MotionMap::zeros(448, 256, 0);
    for v in map.data.iter_mut() {
        *v = rng.gen_range(-range..range);
    }

    let img = flow_to_rgb(&map, range);
    let back = rgb_to_flow(&img);
    let max_err = map
        .data
        .iter()
        .zip(back.data.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    println!("field 448x256, range {range} m");
    println!("round-trip max error: {max_err:.5} m (bound {:.5} m)", range / 127.0);

    let again = flow_to_rgb(&back, range);
    println!(
        "encode(decode(encode(f))) identical to encode(f): {}",
        img.image.data == again.image.data
    );

    println!("\nsample encodings:");
    for offset in [[0.0, 0.0, 0.0], [10.0, -10.0, 0.0], [2.5, 5.0, -7.5]] {
        let mut one = MotionMap::zeros(1, 1, 0);
        one.put(0, 0, offset);
        let px = flow_to_rgb(&one, range).image.get(0, 0);
        println!("  offset {offset:?} -> rgb {px:?}");
    }

    let latent = encode_motion_latent(&img).unwrap();
    println!(
        "\nmock autoencoder: {}x{} image -> {}x{}x{} latent",
        img.image.width, img.image.height, latent.h, latent.w, latent.c
    );
}
