//! Synthetic detection streams with known ground truth.
//!
//! Each fixture choreographs hands and objects on a 1280×720 desk filmed
//! at 30 fps, emits per-frame detections with a little seeded position
//! noise, and carries two reference outputs: the tree records the
//! pipeline is expected to produce (pinned, exact) and the annotated
//! truth a human would give. For the six clean fixtures the two agree
//! and evaluation scores 1.0/1.0; the four `fail-*` fixtures reproduce
//! known failure modes — a commonsense misclassification, a missing
//! object annotation, a spurious grasp, an ambiguous drop between two
//! containers — so both the wrong output and the intended truth are
//! locked in as regression baselines.
//!
//! Scenes are deterministic: the same fixture name always yields the
//! same stream, byte for byte.

use crate::error::{Error, Result};
use crate::evalkit::{FailureClass, GroundTruthEntry};
use crate::grammar::{ActionTree, Terminal, TreeRecord};
use crate::ingest::{
    save_lexicon, save_stream, DetectionStream, FrameDetections, HandDetection, HandKey, Lexicon,
    ObjectClass, ObjectDetection,
};
use crate::plan::PrimitiveLibrary;
use crate::recognize::{ActionLabel, BigramTable, CorpusTable};
use crate::simulate::DurationModel;
use crate::{BBox, Scalar};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Frame rate of every fixture stream.
pub const FIXTURE_FPS: Scalar = 30.0;

/// Side length of the square hand boxes.
const HAND_SIZE: Scalar = 60.0;

/// Uniform per-frame position noise applied to hands (and to whatever
/// they carry, rigidly). Small against every overlap margin the scenes
/// rely on, so link decisions never flicker from noise alone.
const POSITION_NOISE: Scalar = 2.0;

const CONFIDENCE: Scalar = 0.9;

/// Object classes for every label used by the fixtures.
pub fn fixture_lexicon() -> Lexicon {
    let mut lexicon = Lexicon::new();
    for tool in ["knife", "rolling_pin", "spoon"] {
        lexicon.insert(tool, ObjectClass::Tool);
    }
    for container in ["board", "bowl", "cup", "pan", "pot"] {
        lexicon.insert(container, ObjectClass::Container);
    }
    for ingredient in [
        "chicken", "dough", "flour", "food", "lemon", "meat", "oil", "onion", "patty",
    ] {
        lexicon.insert(ingredient, ObjectClass::Ingredient);
    }
    lexicon
}

/// Hand-assembled co-occurrence statistics covering the fixture
/// vocabulary: uniform action priors, round conditional probabilities
/// for the pairings the scenes exercise, and a 1e-4 floor for unseen
/// words. The listed probabilities sit two orders of magnitude above
/// the floor, so each clean scene has an unambiguous argmax.
pub fn fixture_table() -> BigramTable {
    fn corpus(cond: &[(&str, &[(&str, Scalar)])]) -> CorpusTable {
        let uniform = 1.0 / ActionLabel::INDIVIDUAL.len() as Scalar;
        CorpusTable {
            prior: ActionLabel::INDIVIDUAL
                .iter()
                .map(|a| (a.to_string(), uniform))
                .collect(),
            cond: cond
                .iter()
                .map(|(action, words)| {
                    (
                        action.to_string(),
                        words.iter().map(|(w, p)| (w.to_string(), *p)).collect(),
                    )
                })
                .collect(),
            floor: ActionLabel::INDIVIDUAL
                .iter()
                .map(|a| (a.to_string(), 1e-4))
                .collect(),
        }
    }
    let general = corpus(&[
        ("cut", &[("board", 0.01), ("knife", 0.036)]),
        ("heat", &[("pan", 0.05)]),
        ("pour", &[("cup", 0.03), ("pan", 0.01)]),
        ("roll", &[("rolling_pin", 0.06)]),
        ("stir", &[("pot", 0.03), ("spoon", 0.04)]),
    ]);
    let recipe = corpus(&[
        ("cut", &[("meat", 0.03), ("onion", 0.015), ("patty", 0.02)]),
        ("heat", &[("food", 0.03)]),
        ("pour", &[("oil", 0.05)]),
        ("roll", &[("dough", 0.05)]),
        ("sprinkle", &[("onion", 0.04)]),
        ("stir", &[("flour", 0.01), ("onion", 0.029)]),
    ]);
    BigramTable {
        epsilon: 1e-6,
        lexicon: fixture_lexicon(),
        general,
        recipe,
    }
}

fn centered(center: (Scalar, Scalar), size: (Scalar, Scalar)) -> BBox {
    BBox::new(
        center.0 - size.0 / 2.0,
        center.1 - size.1 / 2.0,
        size.0,
        size.1,
    )
}

struct HandState {
    key: HandKey,
    center: (Scalar, Scalar),
}

struct ObjectState {
    label: String,
    size: (Scalar, Scalar),
    /// Nominal centre while the object rests; ignored while carried.
    center: (Scalar, Scalar),
    /// Hand currently carrying the object, if any.
    carried_by: Option<String>,
    /// Rigid offset from the carrying hand's centre.
    offset: (Scalar, Scalar),
}

/// Choreography builder: declare hands and objects, then script motion
/// as a sequence of dwells and glides. Every scripted step emits frames;
/// hands get fresh position noise each frame, resting objects stay
/// pixel-exact, and carried objects follow the (noisy) hand rigidly so
/// their relative geometry never flickers.
///
/// Methods panic on unknown names: a bad script is a programming error
/// in the fixture, not a runtime condition.
pub struct SceneBuilder {
    fps: Scalar,
    rng: ChaCha8Rng,
    hands: BTreeMap<String, HandState>,
    objects: BTreeMap<String, ObjectState>,
    frames: Vec<FrameDetections>,
}

impl SceneBuilder {
    pub fn new(seed: u64) -> SceneBuilder {
        SceneBuilder {
            fps: FIXTURE_FPS,
            rng: ChaCha8Rng::seed_from_u64(seed),
            hands: BTreeMap::new(),
            objects: BTreeMap::new(),
            frames: Vec::new(),
        }
    }

    /// Add a hand (key like `"LH_P1"`) resting at `center`.
    pub fn hand(&mut self, key: &str, center: (Scalar, Scalar)) {
        let parsed: HandKey = key.parse().expect("fixture hand key");
        self.hands.insert(
            key.to_string(),
            HandState {
                key: parsed,
                center,
            },
        );
    }

    /// Add an object instance resting at `center`.
    pub fn object(&mut self, id: &str, label: &str, center: (Scalar, Scalar), size: (Scalar, Scalar)) {
        self.objects.insert(
            id.to_string(),
            ObjectState {
                label: label.to_string(),
                size,
                center,
                carried_by: None,
                offset: (0.0, 0.0),
            },
        );
    }

    /// Attach an object to a hand. The current offset between their
    /// nominal centres is preserved, so picking up never teleports.
    pub fn carry(&mut self, hand: &str, object: &str) {
        let hand_center = self.hands.get(hand).expect("fixture hand").center;
        let obj = self.objects.get_mut(object).expect("fixture object");
        obj.offset = (obj.center.0 - hand_center.0, obj.center.1 - hand_center.1);
        obj.carried_by = Some(hand.to_string());
    }

    /// Detach everything the hand carries, parking each object at its
    /// current nominal position.
    pub fn release(&mut self, hand: &str) {
        let hand_center = self.hands.get(hand).expect("fixture hand").center;
        for obj in self.objects.values_mut() {
            if obj.carried_by.as_deref() == Some(hand) {
                obj.center = (hand_center.0 + obj.offset.0, hand_center.1 + obj.offset.1);
                obj.carried_by = None;
            }
        }
    }

    /// Emit `frames` frames with everything holding position.
    pub fn dwell(&mut self, frames: u64) {
        for _ in 0..frames {
            self.emit_frame();
        }
    }

    /// Move a hand linearly to `to` over `frames` emitted frames; the
    /// last frame lands exactly on the destination.
    pub fn glide(&mut self, hand: &str, to: (Scalar, Scalar), frames: u64) {
        assert!(frames > 0, "glide needs at least one frame");
        let from = self.hands.get(hand).expect("fixture hand").center;
        for i in 1..=frames {
            let t = i as Scalar / frames as Scalar;
            self.hands.get_mut(hand).unwrap().center =
                (from.0 + t * (to.0 - from.0), from.1 + t * (to.1 - from.1));
            self.emit_frame();
        }
    }

    fn emit_frame(&mut self) {
        let frame_index = self.frames.len() as u64;
        let time_s = frame_index as Scalar / self.fps;
        let rng = &mut self.rng;

        let mut noisy: BTreeMap<&str, (Scalar, Scalar)> = BTreeMap::new();
        let mut hands = Vec::new();
        for (name, hand) in &self.hands {
            let center = (
                hand.center.0 + rng.random_range(-POSITION_NOISE..POSITION_NOISE),
                hand.center.1 + rng.random_range(-POSITION_NOISE..POSITION_NOISE),
            );
            noisy.insert(name.as_str(), center);
            hands.push(HandDetection {
                person: hand.key.person.clone(),
                side: hand.key.side,
                bbox: centered(center, (HAND_SIZE, HAND_SIZE)),
                confidence: CONFIDENCE,
            });
        }

        let mut objects = Vec::new();
        for (id, obj) in &self.objects {
            let center = match &obj.carried_by {
                Some(hand) => {
                    let h = noisy[hand.as_str()];
                    (h.0 + obj.offset.0, h.1 + obj.offset.1)
                }
                None => obj.center,
            };
            objects.push(ObjectDetection {
                id: id.clone(),
                label: obj.label.clone(),
                bbox: centered(center, obj.size),
            });
        }

        self.frames.push(FrameDetections {
            frame_index,
            time_s,
            hands,
            objects,
        });
    }

    pub fn finish(self) -> DetectionStream {
        DetectionStream {
            fps: self.fps,
            frames: self.frames,
            lexicon: fixture_lexicon(),
        }
    }
}

// ---------------------------------------------------------------------
// Scenario scripts.
//
// Geometry that the association stage depends on, for the record: hands
// are 60×60 (reach box grown 10% per side, i.e. by 6 px; grasp-by-
// distance cap 1.5 hand diagonals ≈ 127 px), persistence at 30 fps is
// 15 frames, segments shorter than 30 frames merge into their
// predecessor, and containment needs Jaccard > 0.05.
// ---------------------------------------------------------------------

/// One person passes a lemon to another: the left hand carries it,
/// retreats, and the partner's hand arrives within the handover window
/// and carries it away. No grasp overlap, a ~24-frame gap.
fn handover_lemon() -> DetectionStream {
    let mut scene = SceneBuilder::new(0xA1);
    scene.hand("LH_P1", (400.0, 400.0));
    scene.hand("RH_P2", (1000.0, 400.0));
    scene.object("lemon0", "lemon", (400.0, 410.0), (36.0, 36.0));
    scene.carry("LH_P1", "lemon0");
    scene.dwell(330);
    scene.release("LH_P1");
    scene.glide("LH_P1", (400.0, 180.0), 12);
    scene.dwell(10);
    scene.glide("RH_P2", (420.0, 400.0), 12);
    scene.carry("RH_P2", "lemon0");
    scene.dwell(350);
    scene.finish()
}

/// One person steadies the chopping board while the other cuts the meat
/// on it: the knife works an object held by the partner, so the action
/// embeds the holder's hand phrase.
fn hold_board_cut_meat() -> DetectionStream {
    let mut scene = SceneBuilder::new(0xB2);
    scene.hand("LH_P1", (520.0, 450.0));
    scene.hand("RH_P2", (800.0, 430.0));
    scene.object("board0", "board", (640.0, 450.0), (220.0, 120.0));
    scene.object("meat0", "meat", (715.0, 440.0), (60.0, 40.0));
    scene.object("knife0", "knife", (760.0, 430.0), (120.0, 24.0));
    scene.carry("RH_P2", "knife0");
    scene.dwell(360);
    scene.finish()
}

/// Chicken moves from the chopping board into the pot: approach, pick
/// up (lifting clear quickly, so no spurious tool-on-target run
/// persists), carry across, drop, retreat.
fn transfer_chicken() -> DetectionStream {
    let mut scene = SceneBuilder::new(0xC3);
    scene.hand("RH_P1", (410.0, 280.0));
    scene.object("board0", "board", (410.0, 480.0), (220.0, 120.0));
    scene.object("pot0", "pot", (900.0, 470.0), (170.0, 90.0));
    scene.object("chicken0", "chicken", (410.0, 470.0), (50.0, 40.0));
    scene.dwell(150);
    scene.glide("RH_P1", (410.0, 380.0), 10);
    scene.carry("RH_P1", "chicken0");
    scene.glide("RH_P1", (900.0, 380.0), 14);
    scene.dwell(186);
    scene.release("RH_P1");
    scene.glide("RH_P1", (900.0, 280.0), 12);
    scene.dwell(168);
    scene.finish()
}

/// Two people work at once: one stirs the pot with a spoon throughout,
/// the other tips flour from the bowl into that same pot mid-scene. The
/// stir tree picks up the flour leaf once the pot holds it.
fn stir_and_transfer() -> DetectionStream {
    let mut scene = SceneBuilder::new(0xD4);
    scene.hand("RH_P1", (740.0, 390.0));
    scene.hand("RH_P2", (215.0, 300.0));
    scene.object("pot0", "pot", (685.0, 475.0), (170.0, 90.0));
    scene.object("bowl0", "bowl", (215.0, 480.0), (130.0, 60.0));
    scene.object("spoon0", "spoon", (740.0, 430.0), (70.0, 20.0));
    scene.object("flour0", "flour", (215.0, 475.0), (40.0, 30.0));
    scene.carry("RH_P1", "spoon0");
    scene.dwell(150);
    scene.glide("RH_P2", (215.0, 390.0), 10);
    scene.carry("RH_P2", "flour0");
    scene.glide("RH_P2", (620.0, 385.0), 14);
    scene.dwell(86);
    scene.release("RH_P2");
    scene.glide("RH_P2", (620.0, 300.0), 12);
    scene.dwell(178);
    scene.finish()
}

/// A rolling pin flattens dough lying on the bare table.
fn roll_dough() -> DetectionStream {
    let mut scene = SceneBuilder::new(0xE5);
    scene.hand("RH_P1", (640.0, 405.0));
    scene.object("dough0", "dough", (640.0, 470.0), (90.0, 60.0));
    scene.object("pin0", "rolling_pin", (640.0, 450.0), (110.0, 28.0));
    scene.carry("RH_P1", "pin0");
    scene.dwell(330);
    scene.finish()
}

/// A pan with food in it, held by its handle over the flame.
fn heat_food() -> DetectionStream {
    let mut scene = SceneBuilder::new(0xF6);
    scene.hand("RH_P1", (750.0, 470.0));
    scene.object("pan0", "pan", (645.0, 470.0), (170.0, 80.0));
    scene.object("food0", "food", (645.0, 465.0), (50.0, 40.0));
    scene.dwell(330);
    scene.finish()
}

/// Failure: someone presses a cup onto a patty. Nothing in the
/// statistics associates cups with cutting, so recognition picks the
/// cup's most likely verb instead of the annotated `cut` — the tables
/// carry no commonsense about which pairings are physically possible.
fn fail_cup_cut() -> DetectionStream {
    let mut scene = SceneBuilder::new(0x1A7);
    scene.hand("RH_P1", (640.0, 385.0));
    scene.object("patty0", "patty", (640.0, 470.0), (70.0, 40.0));
    scene.object("cup0", "cup", (640.0, 423.0), (50.0, 60.0));
    scene.carry("RH_P1", "cup0");
    scene.dwell(330);
    scene.finish()
}

/// Failure: the onion being cut was never annotated, so the knife works
/// on nothing and the pipeline can only report a bare grasp.
fn fail_missing_object() -> DetectionStream {
    let mut scene = SceneBuilder::new(0x2B8);
    scene.hand("RH_P1", (640.0, 405.0));
    scene.object("knife0", "knife", (640.0, 445.0), (100.0, 24.0));
    scene.carry("RH_P1", "knife0");
    scene.dwell(330);
    scene.finish()
}

/// Failure: the hand hovers a whisker above the knife it is actually
/// using but clips a spoon lying nearby, so the spoon wins the grasp
/// and recognition follows the wrong tool to the wrong verb.
fn fail_spurious_grasp() -> DetectionStream {
    let mut scene = SceneBuilder::new(0x3C9);
    scene.hand("RH_P1", (640.0, 380.0));
    scene.object("board0", "board", (640.0, 480.0), (220.0, 110.0));
    scene.object("onion0", "onion", (640.0, 470.0), (50.0, 40.0));
    scene.object("knife0", "knife", (700.0, 443.0), (100.0, 22.0));
    scene.object("spoon0", "spoon", (590.0, 418.0), (70.0, 20.0));
    scene.dwell(330);
    scene.finish()
}

/// Failure: oil is dropped where the pot and pan boxes overlap, with
/// slightly more of it over the pan, so containment — and with it the
/// transfer destination — resolves to the wrong vessel.
fn fail_wrong_container() -> DetectionStream {
    let mut scene = SceneBuilder::new(0x4DA);
    scene.hand("RH_P1", (215.0, 330.0));
    scene.object("bowl0", "bowl", (215.0, 480.0), (130.0, 60.0));
    scene.object("pot0", "pot", (685.0, 475.0), (170.0, 90.0));
    scene.object("pan0", "pan", (830.0, 470.0), (170.0, 80.0));
    scene.object("oil0", "oil", (215.0, 475.0), (40.0, 70.0));
    scene.dwell(150);
    scene.glide("RH_P1", (215.0, 390.0), 8);
    scene.carry("RH_P1", "oil0");
    scene.glide("RH_P1", (760.0, 385.0), 14);
    scene.dwell(88);
    scene.release("RH_P1");
    scene.glide("RH_P1", (760.0, 300.0), 10);
    scene.dwell(180);
    scene.finish()
}

// ---------------------------------------------------------------------
// Fixture registry.
// ---------------------------------------------------------------------

type ExpectedTree = (&'static str, u64, u64, Option<&'static str>, &'static str);
type TruthLine = (
    &'static str,
    u64,
    u64,
    Option<FailureClass>,
    &'static str,
);

struct FixtureSpec {
    name: &'static str,
    build: fn() -> DetectionStream,
    /// Tree records the pipeline must produce, in emission order:
    /// `(hand, start, end, grasp id, s-expression)`.
    expected: &'static [ExpectedTree],
    /// Annotated truth: `(hand, start, end, failure class, s-expression)`.
    truth: &'static [TruthLine],
}

const HANDOVER_TREE: &str =
    "(HP (HP (H LH_P1) (O lemon)) (CP (C handover) (HP (H RH_P2) (O lemon))))";
const CUT_MEAT_TREE: &str =
    "(HP (HP (H RH_P2) (O knife)) (AP (A cut) (HP (H LH_P1) (O board))))";
const TRANSFER_CHICKEN_TREE: &str =
    "(HP (HP (H RH_P1) (O chicken)) (AP (A transfer) (OP (O chicken) (OP (O board) (O pot)))))";
const STIR_POT_TREE: &str = "(HP (HP (H RH_P1) (O spoon)) (AP (A stir) (O pot)))";
const STIR_FLOUR_TREE: &str =
    "(HP (HP (H RH_P1) (O spoon)) (AP (A stir) (OP (O flour) (O pot))))";
const TRANSFER_FLOUR_TREE: &str =
    "(HP (HP (H RH_P2) (O flour)) (AP (A transfer) (OP (O flour) (OP (O bowl) (O pot)))))";
const ROLL_DOUGH_TREE: &str = "(HP (HP (H RH_P1) (O rolling_pin)) (AP (A roll) (O dough)))";
const HEAT_FOOD_TREE: &str = "(HP (HP (H RH_P1) (O pan)) (AP (A heat) (OP (O food) (O pan))))";
const POUR_PATTY_TREE: &str = "(HP (HP (H RH_P1) (O cup)) (AP (A pour) (O patty)))";
const CUT_PATTY_TREE: &str = "(HP (HP (H RH_P1) (O cup)) (AP (A cut) (O patty)))";
const BARE_KNIFE_TREE: &str = "(HP (H RH_P1) (O knife))";
const CUT_ONION_TREE: &str = "(HP (HP (H RH_P1) (O knife)) (AP (A cut) (O onion)))";
const STIR_ONION_TREE: &str =
    "(HP (HP (H RH_P1) (O spoon)) (AP (A stir) (OP (O onion) (O board))))";
const CUT_ONION_BOARD_TREE: &str =
    "(HP (HP (H RH_P1) (O knife)) (AP (A cut) (OP (O onion) (O board))))";
const TRANSFER_OIL_PAN_TREE: &str =
    "(HP (HP (H RH_P1) (O oil)) (AP (A transfer) (OP (O oil) (OP (O bowl) (O pan)))))";
const TRANSFER_OIL_POT_TREE: &str =
    "(HP (HP (H RH_P1) (O oil)) (AP (A transfer) (OP (O oil) (OP (O bowl) (O pot)))))";

const SPECS: &[FixtureSpec] = &[
    FixtureSpec {
        name: "handover-lemon",
        build: handover_lemon,
        expected: &[
            ("LH_P1", 0, 363, Some("lemon0"), "(HP (H LH_P1) (O lemon))"),
            ("LH_P1", 363, 714, Some("lemon0"), HANDOVER_TREE),
        ],
        truth: &[
            ("LH_P1", 0, 363, None, "(HP (H LH_P1) (O lemon))"),
            ("LH_P1", 363, 714, None, HANDOVER_TREE),
        ],
    },
    FixtureSpec {
        name: "hold-board-cut-meat",
        build: hold_board_cut_meat,
        expected: &[("RH_P2", 0, 360, Some("knife0"), CUT_MEAT_TREE)],
        truth: &[("RH_P2", 0, 360, None, CUT_MEAT_TREE)],
    },
    FixtureSpec {
        name: "transfer-chicken",
        build: transfer_chicken,
        expected: &[
            ("RH_P1", 0, 173, Some("chicken0"), "(HP (H RH_P1) (O chicken))"),
            ("RH_P1", 173, 371, Some("chicken0"), TRANSFER_CHICKEN_TREE),
        ],
        truth: &[
            ("RH_P1", 0, 173, None, "(HP (H RH_P1) (O chicken))"),
            ("RH_P1", 173, 371, None, TRANSFER_CHICKEN_TREE),
        ],
    },
    FixtureSpec {
        name: "stir-and-transfer",
        build: stir_and_transfer,
        expected: &[
            ("RH_P1", 0, 173, Some("spoon0"), STIR_POT_TREE),
            ("RH_P2", 0, 173, Some("flour0"), "(HP (H RH_P2) (O flour))"),
            ("RH_P1", 173, 271, Some("spoon0"), STIR_POT_TREE),
            ("RH_P2", 173, 271, Some("flour0"), TRANSFER_FLOUR_TREE),
            ("RH_P1", 271, 450, Some("spoon0"), STIR_FLOUR_TREE),
        ],
        truth: &[
            ("RH_P1", 0, 173, None, STIR_POT_TREE),
            ("RH_P2", 0, 173, None, "(HP (H RH_P2) (O flour))"),
            ("RH_P1", 173, 271, None, STIR_POT_TREE),
            ("RH_P2", 173, 271, None, TRANSFER_FLOUR_TREE),
            ("RH_P1", 271, 450, None, STIR_FLOUR_TREE),
        ],
    },
    FixtureSpec {
        name: "roll-dough",
        build: roll_dough,
        expected: &[("RH_P1", 0, 330, Some("pin0"), ROLL_DOUGH_TREE)],
        truth: &[("RH_P1", 0, 330, None, ROLL_DOUGH_TREE)],
    },
    FixtureSpec {
        name: "heat-food",
        build: heat_food,
        expected: &[("RH_P1", 0, 330, Some("pan0"), HEAT_FOOD_TREE)],
        truth: &[("RH_P1", 0, 330, None, HEAT_FOOD_TREE)],
    },
    FixtureSpec {
        name: "fail-cup-cut",
        build: fail_cup_cut,
        expected: &[("RH_P1", 0, 330, Some("cup0"), POUR_PATTY_TREE)],
        truth: &[(
            "RH_P1",
            0,
            330,
            Some(FailureClass::ActionRecognition),
            CUT_PATTY_TREE,
        )],
    },
    FixtureSpec {
        name: "fail-missing-object",
        build: fail_missing_object,
        expected: &[("RH_P1", 0, 330, Some("knife0"), BARE_KNIFE_TREE)],
        truth: &[(
            "RH_P1",
            0,
            330,
            Some(FailureClass::HandObject),
            CUT_ONION_TREE,
        )],
    },
    FixtureSpec {
        name: "fail-spurious-grasp",
        build: fail_spurious_grasp,
        expected: &[("RH_P1", 0, 330, Some("spoon0"), STIR_ONION_TREE)],
        truth: &[(
            "RH_P1",
            0,
            330,
            Some(FailureClass::HandObject),
            CUT_ONION_BOARD_TREE,
        )],
    },
    FixtureSpec {
        name: "fail-wrong-container",
        build: fail_wrong_container,
        expected: &[
            ("RH_P1", 0, 171, Some("oil0"), "(HP (H RH_P1) (O oil))"),
            ("RH_P1", 171, 269, Some("oil0"), TRANSFER_OIL_PAN_TREE),
        ],
        truth: &[
            ("RH_P1", 0, 171, None, "(HP (H RH_P1) (O oil))"),
            (
                "RH_P1",
                171,
                269,
                Some(FailureClass::ObjectObject),
                TRANSFER_OIL_POT_TREE,
            ),
        ],
    },
];

/// A generated scene plus its reference outputs.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub name: String,
    pub stream: DetectionStream,
    /// Exact tree records the pipeline produces from `stream` with
    /// default configs and [`fixture_table`].
    pub expected: Vec<TreeRecord>,
    /// Annotated truth; diverges from `expected` on `fail-*` fixtures.
    pub truth: Vec<GroundTruthEntry>,
}

/// Names of every shipped fixture, clean scenes first.
pub fn fixture_names() -> Vec<&'static str> {
    SPECS.iter().map(|s| s.name).collect()
}

/// Build a fixture by name.
pub fn build_fixture(name: &str) -> Result<Fixture> {
    let spec = SPECS.iter().find(|s| s.name == name).ok_or_else(|| {
        Error::InvalidInput(format!(
            "unknown fixture {name:?}; available: {}",
            fixture_names().join(", ")
        ))
    })?;
    let expected = spec
        .expected
        .iter()
        .map(|&(hand, start, end, grasp, sexpr)| {
            Ok(TreeRecord {
                hand: hand.parse()?,
                start_frame: start,
                end_frame: end,
                grasp_id: grasp.map(String::from),
                tree: ActionTree::from_sexpr(sexpr)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let truth = spec
        .truth
        .iter()
        .map(|&(hand, start, end, failure_class, sexpr)| {
            Ok(GroundTruthEntry {
                agent: hand.parse()?,
                start_frame: start,
                end_frame: end,
                failure_class,
                tree: ActionTree::from_sexpr(sexpr)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Fixture {
        name: spec.name.to_string(),
        stream: (spec.build)(),
        expected,
        truth,
    })
}

/// Write a fixture to `dir` as the full set of files a pipeline run
/// consumes: stream, lexicon, co-occurrence table, primitive library,
/// duration model, truth, and the expected tree records. Returns the
/// paths written.
pub fn export_fixture(name: &str, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let fixture = build_fixture(name)?;
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;

    let paths = [
        "stream.jsonl",
        "lexicon.json",
        "table.json",
        "library.json",
        "durations.json",
        "truth.txt",
        "expected_trees.txt",
    ]
    .map(|f| dir.join(f));
    save_stream(&fixture.stream, &paths[0])?;
    save_lexicon(&fixture.stream.lexicon, &paths[1])?;
    fixture_table().save(&paths[2])?;
    PrimitiveLibrary::default().save(&paths[3])?;
    DurationModel::default().save(&paths[4])?;
    crate::evalkit::save_truth(&fixture.truth, &paths[5])?;
    crate::grammar::save_trees(&fixture.expected, &paths[6])?;
    Ok(paths.to_vec())
}

// ---------------------------------------------------------------------
// Random canonical trees.
// ---------------------------------------------------------------------

/// Generate a random canonical action tree: a base hand phrase wearing
/// zero to three action/collaboration attachments at the outermost
/// level, with object chains right-nested and embedded hand phrases
/// bare. These are exactly the shapes the parser itself produces, so
/// `parse(unparse(tree))` must reproduce the tree.
pub fn random_canonical_tree<R: Rng + ?Sized>(rng: &mut R) -> ActionTree {
    use crate::grammar::PhraseLabel::{AP, CP, HP, OP};
    const HANDS: [&str; 4] = ["LH_P1", "LH_P2", "RH_P1", "RH_P2"];
    const WORDS: [&str; 8] = [
        "board", "bowl", "knife", "lemon", "meat", "onion", "pot", "spoon",
    ];

    fn hand_leaf<R: Rng + ?Sized>(rng: &mut R) -> ActionTree {
        let key: HandKey = HANDS[rng.random_range(0..HANDS.len())].parse().unwrap();
        ActionTree::Leaf(Terminal::hand(key))
    }
    fn object_leaf<R: Rng + ?Sized>(rng: &mut R) -> ActionTree {
        ActionTree::Leaf(Terminal::object(WORDS[rng.random_range(0..WORDS.len())]))
    }

    let mut actions: Vec<ActionLabel> = ActionLabel::INDIVIDUAL.to_vec();
    actions.push(ActionLabel::Transfer);

    let base = ActionTree::Phrase(HP, vec![hand_leaf(rng), object_leaf(rng)]);
    let mut tree = base;
    for _ in 0..rng.random_range(0..=3) {
        let attachment = match rng.random_range(0..4) {
            // A plain target: AP → A O.
            0 => {
                let action = actions[rng.random_range(0..actions.len())];
                ActionTree::Phrase(
                    AP,
                    vec![
                        ActionTree::Leaf(Terminal::action(action).unwrap()),
                        object_leaf(rng),
                    ],
                )
            }
            // A right-nested object chain: AP → A OP.
            1 => {
                let action = actions[rng.random_range(0..actions.len())];
                let len = rng.random_range(2..=4);
                let mut words: Vec<ActionTree> = (0..len).map(|_| object_leaf(rng)).collect();
                let mut chain = {
                    let last = words.pop().unwrap();
                    let prev = words.pop().unwrap();
                    ActionTree::Phrase(OP, vec![prev, last])
                };
                while let Some(word) = words.pop() {
                    chain = ActionTree::Phrase(OP, vec![word, chain]);
                }
                ActionTree::Phrase(
                    AP,
                    vec![ActionTree::Leaf(Terminal::action(action).unwrap()), chain],
                )
            }
            // A partner's held object: AP → A HP, inner HP bare.
            2 => {
                let action = actions[rng.random_range(0..actions.len())];
                ActionTree::Phrase(
                    AP,
                    vec![
                        ActionTree::Leaf(Terminal::action(action).unwrap()),
                        ActionTree::Phrase(HP, vec![hand_leaf(rng), object_leaf(rng)]),
                    ],
                )
            }
            // A collaboration: CP → C HP, inner HP bare.
            _ => {
                let collab = if rng.random_range(0..2) == 0 {
                    ActionLabel::Handover
                } else {
                    ActionLabel::Holding
                };
                ActionTree::Phrase(
                    CP,
                    vec![
                        ActionTree::Leaf(Terminal::collab(collab).unwrap()),
                        ActionTree::Phrase(HP, vec![hand_leaf(rng), object_leaf(rng)]),
                    ],
                )
            }
        };
        tree = ActionTree::Phrase(HP, vec![tree, attachment]);
    }
    tree
}
