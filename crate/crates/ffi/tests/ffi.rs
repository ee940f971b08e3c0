use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;
use std::sync::OnceLock;

use vqvc::pipeline::commands::{self, Init, Phase, EXTRACT_SPLITS};
use vqvc::pipeline::store::load_quantizer;
use vqvc::pipeline::{convert_signal, RunConfig};
use vqvc::synth::{Corpus, Split};
use vqvc_ffi::*;

const TINY: &str = "
[corpus]
quantizer_speakers = 2
utts_per_speaker = 10
pretrain_utts = 20
target_sizes = 10, 4
target_valid = 4
valid = 4
test = 6
[run]
target_size = 10
[grid]
sizes = 10, 4
[quantizer]
steps = 30
[pretrain]
steps = 20
eval_every = 10
[finetune]
steps = 10
eval_every = 5
";

struct Trained {
    _dir: tempfile::TempDir,
    cfg: RunConfig,
    corpus: Corpus,
}

fn trained() -> &'static Trained {
    static T: OnceLock<Trained> = OnceLock::new();
    T.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::from_ini(TINY).unwrap();
        cfg.out = dir.path().to_path_buf();
        cfg.sync();
        let corpus = commands::gen_corpus(&cfg, false).unwrap();
        commands::pretrain_quantizer(&cfg, false).unwrap();
        commands::extract(&cfg, &EXTRACT_SPLITS, false).unwrap();
        commands::train_seq2seq_cmd(&cfg, Phase::Pretrain, &Init::Pretrained, false).unwrap();
        commands::train_seq2seq_cmd(&cfg, Phase::Finetune, &Init::Pretrained, false).unwrap();
        Trained { _dir: dir, cfg, corpus }
    })
}

fn c_path(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(vqvc_last_error()) }.to_str().unwrap().to_string()
}

fn load_both(t: &Trained) -> (*mut VqvcQuantizer, *mut VqvcConverter) {
    let (mut q, mut c) = (ptr::null_mut(), ptr::null_mut());
    unsafe {
        assert_eq!(vqvc_quantizer_load(c_path(&t.cfg.quantizer_path()).as_ptr(), &mut q), VqvcStatus::Ok);
        assert_eq!(vqvc_converter_load(c_path(&t.cfg.finetune_path()).as_ptr(), &mut c), VqvcStatus::Ok);
    }
    (q, c)
}

#[test]
fn quantize_matches_the_library() {
    let t = trained();
    let (q, c) = load_both(t);
    let reference = load_quantizer(&t.cfg.quantizer_path()).unwrap();
    let signal = &t.corpus.split(Split::Test).next().unwrap().synth.signal;
    unsafe {
        let mut idx = ptr::null_mut();
        assert_eq!(vqvc_quantize(q, signal.as_ptr(), signal.len(), &mut idx), VqvcStatus::Ok);
        let (mut frames, mut groups) = (0, 0);
        assert_eq!(vqvc_indices_shape(idx, &mut frames, &mut groups), VqvcStatus::Ok);
        let want = reference.indices(signal).unwrap();
        assert_eq!((frames, groups), (want.len(), want.groups()));
        let mut needed = 0;
        assert_eq!(vqvc_indices_copy(idx, ptr::null_mut(), 0, &mut needed), VqvcStatus::BufferTooSmall);
        assert_eq!(needed, frames * groups);
        assert!(last_error().contains("needed"));
        let mut buf = vec![0u32; needed];
        assert_eq!(vqvc_indices_copy(idx, buf.as_mut_ptr(), buf.len(), ptr::null_mut()), VqvcStatus::Ok);
        assert_eq!(buf, want.flat());
        assert_eq!(last_error(), "");
        vqvc_indices_free(idx);
        vqvc_quantizer_free(q);
        vqvc_converter_free(c);
    }
}

#[test]
fn convert_matches_the_library() {
    let t = trained();
    let (q, c) = load_both(t);
    let reference = load_quantizer(&t.cfg.quantizer_path()).unwrap();
    let (model, params) = commands::load_seq2seq(&t.cfg, &t.cfg.finetune_path()).unwrap();
    unsafe {
        assert_eq!(CStr::from_ptr(vqvc_converter_postprocess(c)).to_str().unwrap(), t.cfg.postprocess.name());
        for u in t.corpus.split(Split::Test).take(2) {
            let want = convert_signal(&reference, &model, &params, t.cfg.postprocess, &u.synth.signal).unwrap();
            let mut f = ptr::null_mut();
            assert_eq!(vqvc_convert(c, q, u.synth.signal.as_ptr(), u.synth.signal.len(), &mut f), VqvcStatus::Ok);
            let (mut frames, mut dim, mut truncated) = (0, 0, -1);
            assert_eq!(vqvc_features_shape(f, &mut frames, &mut dim, &mut truncated), VqvcStatus::Ok);
            assert_eq!((frames, dim, truncated), (want.len(), want.dim(), i32::from(want.truncated)));
            let mut buf = vec![0f32; frames * dim];
            let mut needed = 0;
            assert_eq!(vqvc_features_copy(f, buf.as_mut_ptr(), buf.len(), &mut needed), VqvcStatus::Ok);
            assert_eq!(needed, buf.len());
            assert_eq!(buf, want.data());
            vqvc_features_free(f);
        }
        vqvc_quantizer_free(q);
        vqvc_converter_free(c);
    }
}

#[test]
fn errors_map_to_status_codes() {
    let t = trained();
    unsafe {
        let mut q = ptr::null_mut();
        assert_eq!(vqvc_quantizer_load(ptr::null(), &mut q), VqvcStatus::NullArgument);
        assert!(q.is_null());
        let path = c_path(&t.cfg.quantizer_path());
        assert_eq!(vqvc_quantizer_load(path.as_ptr(), ptr::null_mut()), VqvcStatus::NullArgument);
        let missing = c_path(&t.cfg.out.join("missing.ckpt"));
        assert_eq!(vqvc_quantizer_load(missing.as_ptr(), &mut q), VqvcStatus::Io);
        assert!(last_error().contains("missing.ckpt"));
        let manifest = c_path(&t.cfg.corpus_dir().join("manifest.tsv"));
        assert_eq!(vqvc_quantizer_load(manifest.as_ptr(), &mut q), VqvcStatus::Format);
        // a converter checkpoint is not a quantizer
        let mut c = ptr::null_mut();
        let conv = c_path(&t.cfg.finetune_path());
        assert_ne!(vqvc_quantizer_load(conv.as_ptr(), &mut q), VqvcStatus::Ok);
        assert_ne!(vqvc_converter_load(path.as_ptr(), &mut c), VqvcStatus::Ok);
        assert!(q.is_null() && c.is_null());

        let (q, c) = load_both(t);
        let mut f = ptr::null_mut();
        assert_eq!(vqvc_convert(c, ptr::null(), [0.0f32].as_ptr(), 1, &mut f), VqvcStatus::NullArgument);
        assert_eq!(vqvc_convert(c, q, ptr::null(), 0, &mut f), VqvcStatus::NullArgument);
        // too short for a single encoder frame
        assert_eq!(vqvc_convert(c, q, [0.0f32; 4].as_ptr(), 4, &mut f), VqvcStatus::Contract);
        assert!(f.is_null());
        assert_eq!(vqvc_features_shape(ptr::null(), ptr::null_mut(), ptr::null_mut(), ptr::null_mut()), VqvcStatus::NullArgument);
        assert!(vqvc_converter_postprocess(ptr::null()).is_null());
        vqvc_quantizer_free(q);
        vqvc_converter_free(c);
        vqvc_quantizer_free(ptr::null_mut());
        vqvc_converter_free(ptr::null_mut());
        vqvc_indices_free(ptr::null_mut());
        vqvc_features_free(ptr::null_mut());
    }
}

#[test]
fn mismatched_quantizer_is_a_contract_error() {
    let t = trained();
    let dir = tempfile::tempdir().unwrap();
    let mut other = t.cfg.clone();
    other.out = dir.path().to_path_buf();
    other.quantizer.quantizer.codewords = 5;
    other.sync();
    let q = vqvc::pipeline::train_quantizer(&other, &t.corpus).unwrap().0;
    commands::save_quantizer(&other, &q).unwrap();
    let (q, c) = load_both(t);
    unsafe {
        let mut wrong = ptr::null_mut();
        assert_eq!(vqvc_quantizer_load(c_path(&other.quantizer_path()).as_ptr(), &mut wrong), VqvcStatus::Ok);
        let signal = &t.corpus.split(Split::Test).next().unwrap().synth.signal;
        let mut f = ptr::null_mut();
        assert_eq!(vqvc_convert(c, wrong, signal.as_ptr(), signal.len(), &mut f), VqvcStatus::Contract);
        vqvc_quantizer_free(wrong);
        vqvc_quantizer_free(q);
        vqvc_converter_free(c);
    }
}

fn target_dir() -> PathBuf {
    // <target>/<profile>/deps/<test binary>
    std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_against_the_header() {
    let t = trained();
    let lib = target_dir().join("libvqvc_ffi.a");
    assert!(lib.exists(), "{} not built", lib.display());
    let work = tempfile::tempdir().unwrap();
    let src = work.path().join("smoke.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include "vqvc.h"
int main(int argc, char **argv) {
    VqvcQuantizer *q = NULL;
    VqvcConverter *c = NULL;
    VqvcFeatures *f = NULL;
    if (vqvc_quantizer_load(argv[1], &q) != VQVC_STATUS_OK) return 10;
    if (vqvc_converter_load(argv[2], &c) != VQVC_STATUS_OK) return 11;
    if (vqvc_quantizer_load("/nonexistent", &q) != VQVC_STATUS_IO || q != NULL) return 12;
    if (vqvc_quantizer_load(argv[1], &q) != VQVC_STATUS_OK) return 13;
    static float signal[800];
    for (int i = 0; i < 800; i++) signal[i] = (float)((i * 37) % 101) / 50.0f - 1.0f;
    if (vqvc_convert(c, q, signal, 800, &f) != VQVC_STATUS_OK) { fprintf(stderr, "%s\n", vqvc_last_error()); return 14; }
    size_t frames = 0, dim = 0;
    int truncated = 0;
    vqvc_features_shape(f, &frames, &dim, &truncated);
    printf("%zu %zu %d %s\n", frames, dim, truncated, vqvc_converter_postprocess(c));
    vqvc_features_free(f);
    vqvc_converter_free(c);
    vqvc_quantizer_free(q);
    return 0;
}
"#,
    )
    .unwrap();
    let exe = work.path().join("smoke");
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe).arg(t.cfg.quantizer_path()).arg(t.cfg.finetune_path()).output().unwrap();
    assert!(out.status.success(), "exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let fields: Vec<&str> = text.split_whitespace().collect();
    assert_eq!(fields.len(), 4);
    assert!(fields[0].parse::<usize>().unwrap() > 0);
    assert_eq!(fields[1].parse::<usize>().unwrap(), t.cfg.seq2seq.feat_dim);
    assert_eq!(fields[3], "combine+separate");
}
