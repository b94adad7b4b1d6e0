mod common;

use common::{bits, fixture, hyper};
use pipeline_distill::distill::*;
use pipeline_distill::seq2seq::{encode_batch, EncoderBatch, Frame, TokenSequence};
use pipeline_distill::taskgen::chained_ground_truth;
use pipeline_distill::tensor::{ops, Tape};
use pipeline_distill::Error;

#[test]
fn pass_counts_four_versus_two() {
    let f = fixture(0.3, 2);
    let v = &f.corpus.vocab;
    let p = f.pipeline();
    let words = f.words(true);
    let student = assemble_student(f.teacher.0.clone(), f.teacher.1.clone()).unwrap();
    let tgt = f.scripts()[1];
    let c = PassCounter::default();
    let mut full = 0;
    for x in words.iter().take(20) {
        let before = c.total();
        match run_pipeline(&p, v, x, tgt, &c) {
            Ok((_, trace)) => {
                assert_eq!(trace.passes_before_v2, 3);
                assert_eq!(c.total() - before, 4);
                full += 1;
            }
            Err(Error::Pipeline(_)) => assert_eq!(c.total() - before, 2),
            Err(e) => panic!("{e}"),
        }
    }
    assert!(full > 0);
    let c = PassCounter::default();
    for x in words.iter().take(20) {
        student.translate(v, x, tgt, &c).unwrap();
    }
    assert_eq!((c.encoder(), c.decoder()), (20, 20));
}

#[test]
fn pipeline_is_deterministic_and_batch_matches_single() {
    let f = fixture(0.3, 2);
    let v = &f.corpus.vocab;
    let p = f.pipeline();
    let words = f.words(true);
    let tgt = f.scripts()[0];
    let c = PassCounter::default();
    let xs: Vec<&TokenSequence> = words.iter().take(12).collect();
    let (ys, pivots) = run_pipeline_batch(&p, v, &xs, &vec![tgt; xs.len()], &c).unwrap();
    for ((x, y), t) in xs.iter().zip(&ys).zip(&pivots) {
        if let Ok((y1, trace)) = run_pipeline(&p, v, x, tgt, &c) {
            let (y2, trace2) = run_pipeline(&p, v, x, tgt, &c).unwrap();
            assert_eq!(y1, y2);
            assert_eq!(trace, trace2);
            assert_eq!(&y1, y);
            assert_eq!(&trace.x_t, t);
        }
    }
}

#[test]
fn student_rejects_mismatched_parts() {
    let f = fixture(0.3, 1);
    let other = common::tiny_model(f.corpus.vocab.len() + 1);
    let (_, dec) = pipeline_distill::seq2seq::init_model(&other, 0).unwrap();
    assert!(assemble_student(f.teacher.0.clone(), dec).is_err());
}

#[test]
fn copied_encoder_on_identical_input_has_zero_alignment_loss() {
    let f = fixture(0.3, 1);
    let words = f.words(false);
    let pairs: Vec<_> = words.iter().take(32).map(|w| (w.clone(), w.clone())).collect();
    let enc = &f.teacher.0;
    let targets = teacher_encodings(enc, &pairs.iter().map(|p| &p.1).collect::<Vec<_>>()).unwrap();
    let xs: Vec<&TokenSequence> = pairs.iter().map(|p| &p.0).collect();
    let batch = EncoderBatch::new(&xs, enc.config.max_len, Frame::Full).unwrap();
    let mut tape = Tape::new();
    let packed = enc.forward(&mut tape, &batch).unwrap();
    let (loss, skipped) = alignment_loss(&mut tape, packed, &batch, &targets.iter().collect::<Vec<_>>()).unwrap();
    assert_eq!(skipped, 0);
    assert!(tape.value(loss.unwrap()).data()[0].abs() < 1e-6);
    assert!((mean_similarity(&targets, enc, &xs).unwrap() - 1.0).abs() < 1e-6);
}

#[test]
fn alignment_loss_equals_one_minus_cosine() {
    let f = fixture(0.3, 10);
    let pairs = f.relabeled(false);
    let pairs = &pairs[..24];
    let enc = &f.teacher.0;
    let mut student = enc.clone();
    student.set_frozen(false);
    // move the student away from the teacher first
    distill_student_encoder(
        enc,
        &mut student,
        pairs,
        &[],
        &TrainHyper {
            epochs: 1,
            batch_size: 8,
            ..hyper(1, 3)
        },
    )
    .unwrap();

    let targets = teacher_encodings(enc, &pairs.iter().map(|p| &p.1).collect::<Vec<_>>()).unwrap();
    let xs: Vec<&TokenSequence> = pairs.iter().map(|p| &p.0).collect();
    let batch = EncoderBatch::new(&xs, enc.config.max_len, Frame::Full).unwrap();
    let mut tape = Tape::new();
    let packed = student.forward(&mut tape, &batch).unwrap();
    let (loss, _) = alignment_loss(&mut tape, packed, &batch, &targets.iter().collect::<Vec<_>>()).unwrap();
    let loss = tape.value(loss.unwrap()).data()[0] as f64;

    // independently: full-frame encodings, re-masked, flattened, cosine
    let s = encode_batch(&student, &xs, Frame::Full).unwrap();
    let mut expect = 0.0f64;
    for (t, s) in targets.iter().zip(&s) {
        let s = s.with_mask(t.mask()).unwrap();
        expect += 1.0 - ops::cosine_similarity(&t.flatten_masked(), &s.flatten_masked()).unwrap() as f64;
    }
    expect /= targets.len() as f64;
    assert!((loss - expect).abs() < 1e-6, "{loss} vs {expect}");
    assert!(expect > 1e-6);
}

fn improving(losses: &[f64]) -> usize {
    losses.windows(2).filter(|w| w[1] <= w[0]).count()
}

#[test]
fn all_three_algorithms_keep_frozen_parameters_and_reduce_loss() {
    let f = fixture(0.3, 10);
    let v = &f.corpus.vocab;
    let (tenc, tdec) = (&f.teacher.0, &f.teacher.1);
    let teacher_bits = (bits(&tenc.params()), bits(&tdec.params()));
    let pairs = f.relabeled(false);
    let dev = f.relabeled(true);

    let mut senc = tenc.clone();
    senc.set_frozen(false);
    assert!(matches!(
        distill_student_encoder(&senc.clone(), &mut senc, &pairs, &dev, &hyper(1, 1)),
        Err(Error::Contract(_))
    ));
    let log = distill_student_encoder(
        tenc,
        &mut senc,
        &pairs,
        &dev,
        &TrainHyper {
            dropout: false,
            ..hyper(6, 4)
        },
    )
    .unwrap();
    assert!(improving(&log.epoch_loss[..6]) >= 4, "{:?}", log.epoch_loss);
    assert_eq!((bits(&tenc.params()), bits(&tdec.params())), teacher_bits);

    senc.set_frozen(true);
    let senc_bits = bits(&senc.params());
    let mut sdec = tdec.clone();
    sdec.set_frozen(false);
    let log = finetune_decoder_general(
        tenc,
        tdec,
        &senc,
        &mut sdec,
        v,
        &DecoderData::Pairs(pairs.clone()),
        &dev,
        &f.scripts(),
        Chain::Cross,
        &hyper(6, 5),
    )
    .unwrap();
    assert!(improving(&log.epoch_loss[..6]) >= 4, "{:?}", log.epoch_loss);
    assert_eq!((bits(&tenc.params()), bits(&tdec.params())), teacher_bits);
    assert_eq!(bits(&senc.params()), senc_bits);
    assert!(matches!(
        finetune_decoder_general(
            tenc,
            tdec,
            &senc,
            &mut sdec,
            v,
            &DecoderData::Inputs(vec![]),
            &dev,
            &f.scripts(),
            Chain::Cross,
            &hyper(1, 1)
        ),
        Err(Error::Input(_))
    ));

    let inputs: Vec<TokenSequence> = pairs.iter().map(|p| p.0.clone()).collect();
    let dev_in: Vec<TokenSequence> = dev.iter().map(|p| p.0.clone()).collect();
    let mut rdec = tdec.clone();
    rdec.set_frozen(false);
    let log = finetune_decoder_reconstruction(&senc, &mut rdec, v, &DecoderData::Inputs(inputs), &dev_in, &hyper(6, 6))
        .unwrap();
    assert!(improving(&log.epoch_loss[..6]) >= 4, "{:?}", log.epoch_loss);
    assert_eq!(bits(&senc.params()), senc_bits);
    assert!(matches!(
        finetune_decoder_reconstruction(&senc, &mut rdec, v, &DecoderData::Pairs(pairs), &dev_in, &hyper(1, 1)),
        Err(Error::Input(_))
    ));
    let mut unfrozen = senc.clone();
    unfrozen.set_frozen(false);
    assert!(matches!(
        finetune_decoder_reconstruction(&unfrozen, &mut rdec, v, &DecoderData::Inputs(dev_in), &[], &hyper(1, 1)),
        Err(Error::Contract(_))
    ));
}

#[test]
fn one_adam_step_lowers_the_batch_loss() {
    let f = fixture(0.3, 1);
    let v = &f.corpus.vocab;
    let pairs: Vec<_> = f
        .corpus
        .train_pairs(pipeline_distill::taskgen::DatasetFormat::Bi)
        .unwrap()
        .iter()
        .take(32)
        .map(|p| p.encode(v).unwrap())
        .collect();
    let mut model = pipeline_distill::seq2seq::init_model(&common::tiny_model(v.len()), 9).unwrap();
    let before = teacher_loss(&model.0, &model.1, &pairs).unwrap();
    let h = TrainHyper {
        epochs: 1,
        batch_size: 32,
        warmup_steps: 0,
        dropout: false,
        ..hyper(1, 1)
    };
    train_teacher(&mut model, &pairs, &[], v, &h).unwrap();
    assert!(teacher_loss(&model.0, &model.1, &pairs).unwrap() < before);
}

#[test]
fn mirror_objectives_coincide_when_the_pipeline_reconstructs() {
    // with no ambiguity the round trip is deterministic
    let f = fixture(0.0, 40);
    let v = &f.corpus.vocab;
    let (tenc, tdec) = (&f.teacher.0, &f.teacher.1);
    let pairs = f.relabeled(false);
    let langs: Vec<Vec<u32>> = pairs
        .iter()
        .map(|p| Chain::Mirror.targets(p.0.lang, &f.scripts()))
        .collect();
    let ys = teacher_outputs(tenc, tdec, v, &pairs.iter().map(|p| &p.1).collect::<Vec<_>>(), &langs).unwrap();
    let exact: Vec<(&TokenSequence, &TokenSequence)> = pairs
        .iter()
        .zip(&ys)
        .filter_map(|(p, y)| y[0].as_ref().filter(|y| **y == p.0).map(|y| (&p.0, y)))
        .collect();
    assert!(exact.len() > 10, "only {} exact reconstructions", exact.len());
    let mems = student_encodings(tenc, &exact.iter().map(|e| e.0).collect::<Vec<_>>()).unwrap();
    let mems: Vec<_> = mems.iter().collect();
    let loss = |targets: Vec<&TokenSequence>| {
        let mut tape = Tape::new();
        let l = decoder_loss(&mut tape, tdec, &mems, &targets).unwrap();
        tape.value(l).data()[0]
    };
    let alg2 = loss(exact.iter().map(|e| e.1).collect());
    let alg3 = loss(exact.iter().map(|e| e.0).collect());
    assert_eq!(alg2.to_bits(), alg3.to_bits());

    for (x, y) in &exact {
        let w = v.decode_word(x);
        let script = v.lang_name(x.lang).unwrap();
        let ex = chained_ground_truth(&w, script, script, &f.corpus.tables).unwrap();
        assert!(ex.allowed_targets.contains(&v.decode_word(y)));
    }
}
