use std::path::{Path, PathBuf};

use clap::{Args, Subcommand};
use snowgt_core::synth::{
    synth_rain_streaks, synth_snow_video, textured_background, RainParams, SnowParams,
};
use snowgt_core::video::save_frames;
use snowgt_core::{Image, VideoTensor};

use crate::{parse_channels, write_file, CliError, Result};

#[derive(Subcommand)]
pub enum SynthCommand {
    /// Falling snow over a static background.
    Snow(SnowArgs),
    /// Independent rain-streak images, one per frame.
    Rain(RainArgs),
}

#[derive(Args)]
pub struct Common {
    /// Output directory: degraded frames, plus clean/ and masks/.
    #[arg(long)]
    output: PathBuf,
    /// Background image; a smooth texture is generated when omitted.
    #[arg(long)]
    background: Option<PathBuf>,
    #[arg(long, default_value_t = 128)]
    width: usize,
    #[arg(long, default_value_t = 128)]
    height: usize,
    #[arg(long, default_value_t = 3, value_parser = parse_channels)]
    channels: usize,
    #[arg(long, default_value_t = 16)]
    frames: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl Common {
    fn background(&self) -> Result<Image> {
        match &self.background {
            Some(path) => Ok(Image::load(path, self.channels)?),
            None => Ok(textured_background(
                self.height,
                self.width,
                self.channels,
                0.2,
                0.8,
                self.seed,
            )),
        }
    }
}

#[derive(Args)]
pub struct SnowArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = SnowParams::default().density)]
    density: f64,
    #[arg(long, default_value_t = SnowParams::default().size_min)]
    size_min: f64,
    #[arg(long, default_value_t = SnowParams::default().size_max)]
    size_max: f64,
    #[arg(long, default_value_t = SnowParams::default().opacity_min)]
    opacity_min: f64,
    #[arg(long, default_value_t = SnowParams::default().opacity_max)]
    opacity_max: f64,
    #[arg(long, default_value_t = SnowParams::default().fall_speed)]
    fall_speed: f64,
    #[arg(long, default_value_t = SnowParams::default().tau)]
    tau: f64,
}

#[derive(Args)]
pub struct RainArgs {
    #[command(flatten)]
    common: Common,
    /// Degrees from the +x axis; 90 is vertical.
    #[arg(long, default_value_t = RainParams::default().orientation_deg)]
    orientation: f64,
    #[arg(long, default_value_t = RainParams::default().length)]
    length: f64,
    #[arg(long, default_value_t = RainParams::default().density)]
    density: f64,
    #[arg(long, default_value_t = RainParams::default().opacity)]
    opacity: f64,
    #[arg(long, default_value_t = RainParams::default().width_sigma)]
    width_sigma: f64,
    #[arg(long, default_value_t = RainParams::default().tau)]
    tau: f64,
}

pub fn run(cmd: SynthCommand) -> Result<()> {
    match cmd {
        SynthCommand::Snow(a) => snow(a),
        SynthCommand::Rain(a) => rain(a),
    }
}

fn write_set<P: serde::Serialize>(
    out: &Path,
    degraded: &VideoTensor,
    clean: &VideoTensor,
    masks: &[Image],
    particles: &P,
) -> Result<()> {
    save_frames(degraded, out)?;
    save_frames(clean, &out.join("clean"))?;
    save_frames(&VideoTensor::from_frames(masks)?, &out.join("masks"))?;
    let json =
        serde_json::to_string_pretty(particles).map_err(|e| CliError::Usage(e.to_string()))?;
    write_file(&out.join("particles.json"), &json)?;
    eprintln!("wrote {} frames -> {}", degraded.frames(), out.display());
    Ok(())
}

fn snow(a: SnowArgs) -> Result<()> {
    let params = SnowParams {
        density: a.density,
        size_min: a.size_min,
        size_max: a.size_max,
        opacity_min: a.opacity_min,
        opacity_max: a.opacity_max,
        fall_speed: a.fall_speed,
        tau: a.tau,
    };
    let bg = a.common.background()?;
    let sv = synth_snow_video(&bg, a.common.frames, &params, a.common.seed)?;
    let masks: Vec<Image> = sv.masks.iter().map(|m| m.to_image()).collect();
    write_set(
        &a.common.output,
        &sv.video,
        &sv.clean,
        &masks,
        &sv.particles,
    )
}

fn rain(a: RainArgs) -> Result<()> {
    let params = RainParams {
        orientation_deg: a.orientation,
        length: a.length,
        density: a.density,
        opacity: a.opacity,
        width_sigma: a.width_sigma,
        tau: a.tau,
    };
    if a.common.frames < 2 {
        return Err(CliError::Usage("--frames must be at least 2".into()));
    }
    let bg = a.common.background()?;
    let mut images = Vec::new();
    let mut masks = Vec::new();
    let mut particles = Vec::new();
    for t in 0..a.common.frames as u64 {
        let r = synth_rain_streaks(&bg, &params, a.common.seed.wrapping_add(t))?;
        images.push(r.image);
        masks.push(r.mask.to_image());
        particles.push(r.layer.particles);
    }
    let clean = VideoTensor::repeated(&bg, a.common.frames)?;
    write_set(
        &a.common.output,
        &VideoTensor::from_frames(&images)?,
        &clean,
        &masks,
        &particles,
    )
}
