use simseg::scenegen::*;
use simseg::seeding::rng_from;

fn main() {
    let out = std::path::Path::new("/tmp/preview");
    std::fs::create_dir_all(out).unwrap();
    for seed in 0..4u64 {
        let p = sample_scene_params(&mut rng_from(seed), &SceneRanges::default()).unwrap();
        let (synth, _) = render_synthetic(&p, 128);
        let (real, mask) = render_realistic(&p, 128);
        simseg::imaging::save_image(&synth, &out.join(format!("synth_{seed}.png"))).unwrap();
        simseg::imaging::save_image(&real, &out.join(format!("real_{seed}.png"))).unwrap();
        simseg::imaging::save_mask(&mask, &out.join(format!("mask_{seed}.png"))).unwrap();
    }
    for (i, kind) in [BackgroundKind::Varied, BackgroundKind::OrganLike].iter().enumerate() {
        let bg = render_background(*kind, 7 + i as u64, 128);
        simseg::imaging::save_image(&bg, &out.join(format!("bg_{i}.png"))).unwrap();
    }
    // side-by-side sheet: 4 scenes x (synth, real, mask) + 2 bgs
    let mut sheet = image::RgbImage::new(128 * 4, 128 * 4);
    for seed in 0..4u32 {
        for (r, name) in ["synth", "real", "mask"].iter().enumerate() {
            let img = image::open(out.join(format!("{name}_{seed}.png"))).unwrap().to_rgb8();
            image::imageops::replace(&mut sheet, &img, (seed * 128) as i64, (r as u32 * 128) as i64);
        }
    }
    for i in 0..2u32 {
        let img = image::open(out.join(format!("bg_{i}.png"))).unwrap().to_rgb8();
        image::imageops::replace(&mut sheet, &img, (i * 128) as i64, 384);
    }
    sheet.save(out.join("sheet.png")).unwrap();
    println!("wrote {}", out.join("sheet.png").display());
}
