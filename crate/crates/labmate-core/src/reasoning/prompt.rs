//! Standardised scene prompt.
//!
//! Template: `This scene contains the following objects: <labels>.
//! [The distances between these objects are: <pairs>.] Is the human
//! obstructing the path and/or interacting with the equipment
//! (<equipment>)? Respond with Yes or No. [<threshold rules>]`
//!
//! The bracketed parts appear only in the `VisionPlusDepth` variant, as
//! pure insertions, so the vision-only text is always a subsequence of the
//! vision+depth text for the same scene.

use std::collections::BTreeSet;

use crate::perception::{DistanceReport, Scene};
use crate::rules::RuleConfig;

use super::{PromptBundle, PromptVariant, ReasoningError};

fn join_natural(names: &[String]) -> String {
    match names.len() {
        0 => String::new(),
        1 => names[0].clone(),
        _ => format!("{} and {}", names[..names.len() - 1].join(", "), names[names.len() - 1]),
    }
}

/// Instantiate the prompt for a scene.
///
/// Distances are rendered as `<a>–<b>: D.DD m`, pair names ordered
/// lexicographically within each entry and entries sorted lexicographically,
/// so prompts are reproducible byte for byte. Multiple instances of a label
/// are disambiguated by index, e.g. `human_chemist[1]`.
pub fn build_prompt(
    scene: &Scene,
    report: &DistanceReport,
    variant: PromptVariant,
    rules: &RuleConfig,
) -> Result<PromptBundle, ReasoningError> {
    if scene.objects.is_empty() {
        return Err(ReasoningError::EmptyScene);
    }

    let object_names: Vec<String> = scene
        .objects
        .iter()
        .map(|o| format!("{}[{}]", o.label, o.instance_id))
        .collect();

    let equipment_names: BTreeSet<&str> =
        scene.equipment().map(|o| o.label.as_str()).collect();
    let equipment_clause = if equipment_names.is_empty() {
        "equipment".to_string()
    } else {
        equipment_names.into_iter().collect::<Vec<_>>().join(", ")
    };

    let mut text = format!(
        "This scene contains the following objects: {}.",
        join_natural(&object_names)
    );

    let distances_included = variant == PromptVariant::VisionPlusDepth;
    if distances_included {
        let mut pairs: Vec<String> = report
            .iter()
            .map(|(a, b, d)| {
                let (mut x, mut y) = (a.display_name(), b.display_name());
                if x > y {
                    std::mem::swap(&mut x, &mut y);
                }
                format!("{x}–{y}: {d:.2} m")
            })
            .collect();
        pairs.sort();
        text.push_str(&format!(
            " The distances between these objects are: {}.",
            pairs.join(", ")
        ));
    }

    text.push_str(&format!(
        " Is the human obstructing the path and/or interacting with the equipment \
         ({equipment_clause})? Respond with Yes or No."
    ));

    if distances_included {
        text.push_str(&format!(
            " The human is interacting with the equipment when their distance to it is \
             less than {:.2} m. The human is obstructing the path when they are within \
             {:.2} m of the robot's route to its goal.",
            rules.t_interact_m, rules.corridor_halfwidth_m
        ));
    }

    Ok(PromptBundle {
        text,
        image_ref: scene.image_ref.clone(),
        labels: scene.objects.iter().map(|o| o.label).collect(),
        distances_included,
    })
}
