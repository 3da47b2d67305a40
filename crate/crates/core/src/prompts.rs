//! Prompt templates. Slots are written `{name}` and filled verbatim.

pub const KNOWLEDGE_SUMMARY: &str = "\
Summarize what is known about the following web interface into a structured markdown file.
Page: {page_title} ({page_url})

Retrieved documents:
{documents}

UI Elements:
{ui_elements}

Use exactly these four second-level headings, in this order:
## What it is
## Features
## Supported interactions
## Unsupported interactions

Return only the markdown.
";

pub const HANDBOOK_GENERATION: &str = "\
Generate N={n} in-situ assistance pairs for the web
interface.
Page: {page_title} ({page_url})
Interface Knowledge: {interface_knowledge}
User challenge (optional): {user_query}
UI Elements:
{ui_elements}

Use the page title, URL, knowledge, and available UI elements to infer the interface's purpose, the actions it supports, and likely sources of user challenges in navigating the interface. Generate diverse and representative assistance targeting to solve the user challenges. Select the appropriate dom assistance type to resolve the challenge.

{design_space}

Common challenge types to reason about:
  - Meaning: the user does not know what a term, field, control, or output means.
  - Location: the user cannot find the right field, feature, or control.
  - Procedure: the user knows the goal but not the steps or interaction pattern.
  - Behavior: the user does not understand why the interface produced a result.
  - Direction: the user completed a step but does not know what to do next.
  - Capability: the user wants something the tool may hide, lack, or make awkward.
Cover the types that genuinely fit this UI.

{design_space_guidelines}

Output schema (return a JSON array of objects):
{
  assistance: \"[Action] [target] to [outcome]\",
  whyItHelps: \"Users who [need] can
    [intervention], [outcome].\",
  domSubtype: one of
    1. insert.overlay_tip
    2. insert.widget
    3. insert.inline_control
    4. mutate.style
    5. mutate.representation
    6. mutate.reframe
    7. recompose.reorder
    8. recompose.group
    9. recompose.layout,
  configuration: [execution configuration of the
    DOM manipulation type],
  targets: [{ uiDescription: exact element label
    from UI element list }],
  category: optional, one of WHAT, WHERE, HOW, WHY, NEXT, CAN
}
";

pub const FALLBACK_CASE: &str = "\
Generate 1 in-situ assistance pair for the web interface that resolves the user's challenge.
Page: {page_title} ({page_url})
Interface Knowledge: {interface_knowledge}
User challenge: {user_query}
UI Elements:
{ui_elements}

{design_space}

{design_space_guidelines}

The whyItHelps field MUST restate the user's challenge in the user's own words,
for example: Users who ask \"{user_query}\" can ...

Output schema (return one JSON object):
{
  assistance: \"[Action] [target] to [outcome]\",
  whyItHelps: \"Users who [need] can [intervention], [outcome].\",
  domSubtype: one of insert.overlay_tip, insert.widget, insert.inline_control,
    mutate.style, mutate.representation, mutate.reframe,
    recompose.reorder, recompose.group, recompose.layout,
  configuration: [execution configuration of the DOM manipulation type],
  targets: [{ uiDescription: exact element label from UI element list }],
  category: optional, one of WHAT, WHERE, HOW, WHY, NEXT, CAN
}
";

pub const JUDGE: &str = "\
You are evaluating whether a UI assistance
suggestion resolves a user's challenge.

User Need: \"{user_need}\"
Interface: \"{interface_name}\"
Generated Assistance: \"{generated_assistance}\"
Reference Assistance: \"{annotated_assistance}\"

Evaluate whether the generated assistance would resolve the user with their stated challenges and needs. Do not directly compare it against any reference answer or ground truth.

Score 0-10:
  10    = Directly and fully addresses the need
  8-9   = Addresses the need well with minor gaps
  6-7   = Mostly addresses the need but misses
          some important detail
  3-5   = Partially addresses the need
  1-2   = Tangentially related but not helpful
  0     = Does not address the need

Return ONLY valid JSON with the exact structure:
{
  \"score\": <number between 0 and 10>,
  \"reasoning\": \"<brief explanation>\"
}
";

/// The assistance types available to the generator.
pub const DESIGN_SPACE: &str = "\
Assistance types:
- insert.overlay_tip: a floating tip anchored next to one target element.
- insert.inline_control: a new control (search-input, button, toggle, slider) placed beside one target.
- insert.widget: a floating, self-contained panel with a title, a markdown body and action buttons.
- mutate.style: change the visual style of targets (color, background, border, opacity, outline, font-size, animation-pulse) to draw attention.
- mutate.representation: switch how an input is operated (text to slider, text to color-picker, number to stepper).
- mutate.reframe: rewrite the visible text of targets.
- recompose.reorder: change the order of sibling targets inside their shared container.
- recompose.group: gather two or more targets under a new labeled container.
- recompose.layout: swap the positions of two or more page regions.
Elements are never removed or hidden.";

/// Configuration schema per assistance type.
pub const DESIGN_SPACE_GUIDELINES: &str = "\
Configuration by type:
- insert.overlay_tip: {\"tip_text\": string, \"placement\": \"above\"|\"below\"|\"left\"|\"right\"}
- insert.inline_control: {\"placement\": \"adjacent\", \"detail\": {\"controlType\": \"search-input\"|\"button\"|\"toggle\"|\"slider\", \"label\": string, \"placeholder\": string (optional), \"action\": {\"type\": string}}}
- insert.widget: {\"title\": string, \"body\": markdown string, \"controls\": [{\"label\": string, \"action\": \"save_snapshot\"|\"dismiss\"|{\"emit_event\": string}}]} (targets may be empty)
- mutate.style: {\"properties\": {property: value}}
- mutate.representation: {\"from_modality\": \"text\"|\"number\", \"to_modality\": \"slider\"|\"color-picker\"|\"stepper\"}
- mutate.reframe: {\"new_text\": {uiDescription: new text}}
- recompose.reorder: {\"order\": [uiDescription, ...]} (all targets share one parent)
- recompose.group: {\"group_label\": string} (two or more targets)
- recompose.layout: {\"order\": [uiDescription, ...]} (two or more region targets)";
