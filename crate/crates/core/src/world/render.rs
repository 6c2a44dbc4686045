use std::io::{self, Write};

use super::{link_points, HiddenAttr, Image, ObjectKind, ObjectSpec, WorldState};

pub type Rgb = [u8; 3];

/// Reserved table color. Pure black never appears in a render; it marks
/// filtered-out pixels.
pub const BACKGROUND: Rgb = [16, 16, 16];
pub const ARM: Rgb = [128, 128, 128];
pub const LAMP_OFF: Rgb = [90, 0, 0];
pub const LAMP_ON: Rgb = [0, 250, 0];
pub const LAMP_COMPARE_LEFT: Rgb = [250, 250, 0];
pub const LAMP_COMPARE_RIGHT: Rgb = [0, 250, 250];

/// Sprite color of an object class. Injective over (kind, tag < 8).
pub fn palette(kind: ObjectKind, color_tag: u8) -> Rgb {
    let k = kind as u16;
    let t = color_tag.min(7) as u16;
    [(60 + 24 * t) as u8, (40 + 36 * k) as u8, (100 + (k * 37 + t * 13) % 120) as u8]
}

fn fill_rect(img: &mut Image, o: &ObjectSpec, color: Rgb) {
    let (hw, hh) = (o.size.0 / 2.0, o.size.1 / 2.0);
    let u0 = (o.pose.x - hw).floor().max(0.0) as usize;
    let v0 = (o.pose.y - hh).floor().max(0.0) as usize;
    let u1 = ((o.pose.x + hw).ceil() as usize).min(img.width);
    let v1 = ((o.pose.y + hh).ceil() as usize).min(img.height);
    for v in v0..v1 {
        for u in u0..u1 {
            let (cx, cy) = (u as f64 + 0.5, v as f64 + 0.5);
            if (cx - o.pose.x).abs() < hw && (cy - o.pose.y).abs() < hh {
                img.set(u, v, color);
            }
        }
    }
}

fn plot(img: &mut Image, x: f64, y: f64, color: Rgb) {
    if x >= 0.0 && y >= 0.0 && (x as usize) < img.width && (y as usize) < img.height {
        img.set(x as usize, y as usize, color);
    }
}

fn lamp_color(state: &WorldState, o: &ObjectSpec) -> Rgb {
    match o.kind {
        ObjectKind::Scanner => {
            let on_pad = |left: bool| {
                state
                    .objects
                    .iter()
                    .filter(|b| {
                        b.kind == ObjectKind::Block
                            && b.held_by.is_none()
                            && o.contains(b.pose.x, b.pose.y)
                            && ((b.pose.x < o.pose.x) == left)
                    })
                    .collect::<Vec<_>>()
            };
            let (l, r) = (on_pad(true), on_pad(false));
            if l.len() != 1 || r.len() != 1 {
                return LAMP_OFF;
            }
            let rank = |id: u32| {
                state
                    .hidden(id)
                    .find_map(|a| if let HiddenAttr::SizeRank(r) = a { Some(*r) } else { None })
                    .unwrap_or(0)
            };
            if rank(l[0].object_id) > rank(r[0].object_id) {
                LAMP_COMPARE_LEFT
            } else {
                LAMP_COMPARE_RIGHT
            }
        }
        _ => match state.latch(o.object_id) {
            Some(l) if l.latched_at.is_some() => LAMP_ON,
            _ => LAMP_OFF,
        },
    }
}

/// Flat-color top-down render. Layers: floor fixtures, arm links, held
/// objects, loose objects, lamps.
pub fn render(state: &WorldState) -> Image {
    let cfg = &state.config;
    let mut img = Image::filled(cfg.image_width, cfg.image_height, BACKGROUND);
    let t = state.time_step;
    let visible = |o: &&ObjectSpec| o.visible_from <= t;

    for o in state.objects.iter().filter(visible) {
        if matches!(o.kind, ObjectKind::Slot | ObjectKind::Scanner) {
            fill_rect(&mut img, o, palette(o.kind, o.color_tag));
        }
    }
    for (arm, st) in state.arms.iter().enumerate() {
        let pts = link_points(cfg, arm, &st.joints);
        for w in pts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let n = ((b.0 - a.0).hypot(b.1 - a.1) * 4.0).ceil() as usize;
            for i in 0..=n {
                let s = i as f64 / n.max(1) as f64;
                plot(&mut img, a.0 + (b.0 - a.0) * s, a.1 + (b.1 - a.1) * s, ARM);
            }
        }
    }
    for o in state.objects.iter().filter(visible).filter(|o| o.held_by.is_some()) {
        fill_rect(&mut img, o, palette(o.kind, o.color_tag));
    }
    for o in state.objects.iter().filter(visible) {
        if o.held_by.is_none() && !matches!(o.kind, ObjectKind::Slot | ObjectKind::Scanner) {
            fill_rect(&mut img, o, palette(o.kind, o.color_tag));
        }
    }
    for o in state.objects.iter().filter(visible) {
        if o.kind.has_lamp(o.color_tag) {
            let lamp = ObjectSpec {
                pose: super::Pose { x: o.pose.x, y: o.pose.y - o.size.1 / 2.0 - 2.0, theta: 0.0 },
                size: (2.0, 2.0),
                ..o.clone()
            };
            fill_rect(&mut img, &lamp, lamp_color(state, o));
        }
    }
    img
}

/// Binary PPM (P6).
pub fn write_ppm<W: Write>(img: &Image, mut out: W) -> io::Result<()> {
    write!(out, "P6\n{} {}\n255\n", img.width, img.height)?;
    out.write_all(&img.data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn palette_is_injective_and_avoids_reserved() {
        let mut seen = HashSet::new();
        for k in ObjectKind::ALL {
            for t in 0..8 {
                let c = palette(k, t);
                assert!(seen.insert(c));
                for r in [BACKGROUND, ARM, LAMP_OFF, LAMP_ON, LAMP_COMPARE_LEFT, LAMP_COMPARE_RIGHT, [0, 0, 0]] {
                    assert_ne!(c, r);
                }
            }
        }
    }

    #[test]
    fn ppm_header() {
        let img = Image::filled(2, 1, [1, 2, 3]);
        let mut buf = Vec::new();
        write_ppm(&img, &mut buf).unwrap();
        assert_eq!(&buf[..11], b"P6\n2 1\n255\n");
        assert_eq!(&buf[11..], &[1, 2, 3, 1, 2, 3]);
    }
}
