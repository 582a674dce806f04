use std::ffi::{CStr, CString};
use std::ptr;

use editjpeg::codec::{decode_baseline, RgbImage};
use editjpeg::edit::EditConfig;
use editjpeg::pipeline::PipelineConfig;
use editjpeg::synth::natural_image;
use editjpeg::train::{crop_patches, TrainConfig, Trainer};
use editjpeg_ffi::*;

fn empty() -> EjBuffer {
    EjBuffer { data: ptr::null_mut(), len: 0 }
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(ej_last_error()) }.to_string_lossy().into_owned()
}

fn bytes(buf: &EjBuffer) -> &[u8] {
    unsafe { std::slice::from_raw_parts(buf.data, buf.len) }
}

#[test]
fn encode_decode_round_trip() {
    let img = natural_image(40, 24, 3);
    let mut jpeg = empty();
    let st = unsafe { ej_encode_rgb(img.data().as_ptr(), 40, 24, 75, &mut jpeg) };
    assert_eq!(st, EjStatus::Ok);
    assert_eq!(last_error(), "");

    let (mut w, mut h, mut rgb) = (0usize, 0usize, empty());
    let st = unsafe { ej_decode_rgb(jpeg.data, jpeg.len, &mut rgb, &mut w, &mut h) };
    assert_eq!(st, EjStatus::Ok);
    assert_eq!((w, h, rgb.len), (40, 24, 40 * 24 * 3));
    let direct = decode_baseline(bytes(&jpeg)).unwrap();
    assert_eq!(bytes(&rgb), direct.data());

    unsafe {
        ej_buffer_free(&mut jpeg);
        ej_buffer_free(&mut rgb);
        ej_buffer_free(&mut rgb);
        ej_buffer_free(ptr::null_mut());
    }
    assert!(jpeg.data.is_null() && jpeg.len == 0);
}

#[test]
fn errors_set_status_and_message() {
    let img = natural_image(8, 8, 1);
    let mut out = empty();
    assert_eq!(unsafe { ej_encode_rgb(img.data().as_ptr(), 8, 8, 0, &mut out) }, EjStatus::InvalidArgument);
    assert!(last_error().contains("quality"));
    assert_eq!(unsafe { ej_encode_rgb(ptr::null(), 8, 8, 50, &mut out) }, EjStatus::NullPointer);
    assert_eq!(unsafe { ej_encode_rgb(img.data().as_ptr(), 0, 8, 50, &mut out) }, EjStatus::InvalidArgument);

    let junk = [0xffu8, 0xd8, 0xff];
    let (mut w, mut h) = (0, 0);
    assert_eq!(unsafe { ej_decode_rgb(junk.as_ptr(), junk.len(), &mut out, &mut w, &mut h) }, EjStatus::Format);
    assert!(!last_error().is_empty());
    assert!(out.data.is_null());

    let missing = CString::new("/nonexistent/model.ckpt").unwrap();
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { ej_model_load(missing.as_ptr(), &mut model) }, EjStatus::Io);
    assert!(model.is_null());
}

#[test]
fn model_handle_encodes_standard_stream() {
    let cfg = TrainConfig {
        patch_size: 16,
        batch_size: 2,
        patches: 2,
        steps: 1,
        pipeline: PipelineConfig { edit: EditConfig { hidden: 8, k: 16, steps: 2 }, ..Default::default() },
        ..Default::default()
    };
    let mut trainer = Trainer::new(cfg, crop_patches(&[natural_image(32, 32, 2)], 16, 2, 1)).unwrap();
    trainer.step_once().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    trainer.checkpoint().save(&path).unwrap();
    let expected = trainer.model.qtables();

    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { ej_model_load(cpath.as_ptr(), &mut model) }, EjStatus::Ok);
    let (mut luma, mut chroma) = ([0u8; 64], [0u8; 64]);
    assert_eq!(unsafe { ej_model_qtables(model, luma.as_mut_ptr(), chroma.as_mut_ptr()) }, EjStatus::Ok);
    assert_eq!(&luma, expected.luma.values());
    assert_eq!(&chroma, expected.chroma.values());

    let img: RgbImage = natural_image(24, 16, 9);
    let mut jpeg = empty();
    assert_eq!(unsafe { ej_model_encode_rgb(model, img.data().as_ptr(), 24, 16, &mut jpeg) }, EjStatus::Ok);
    let decoded = decode_baseline(bytes(&jpeg)).unwrap();
    assert_eq!((decoded.width(), decoded.height()), (24, 16));
    unsafe {
        ej_buffer_free(&mut jpeg);
        ej_model_free(model);
        ej_model_free(ptr::null_mut());
    }
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/editjpeg.h");
    let text = std::fs::read_to_string(header).unwrap();
    for name in ["ej_encode_rgb", "ej_decode_rgb", "ej_buffer_free", "ej_model_load", "ej_model_free",
        "ej_model_encode_rgb", "ej_model_qtables", "ej_last_error", "typedef struct EjModel EjModel"] {
        assert!(text.contains(name), "header lacks {name}");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(&src, "#include \"editjpeg.h\"\nint main(void) { EjBuffer b = {0}; ej_buffer_free(&b); return EJ_STATUS_OK; }\n").unwrap();
    let Ok(status) = std::process::Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(&src)
        .status()
    else {
        eprintln!("no C compiler found; syntax check skipped");
        return;
    };
    assert!(status.success());
}
