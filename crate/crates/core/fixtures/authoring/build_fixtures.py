"""Authors the bundled fixtures: two page snapshots with their expected
element listings, golden cases for every subtype, the grounding target set
with brute-force nearest neighbours, the eval dataset, mock search results,
and mock generator responses.

Run from anywhere; writes next to this script's parent directory.
Element expectations are derived from the authoring description here, not
from the Rust extractor, so the Rust tests compare two independent views.
"""
import hashlib
import json
import math
import os
import sys
from urllib.parse import urlsplit

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, os.path.join(ROOT, "..", "tests", "oracles"))
from mock_embedder_oracle import counts  # noqa: E402

CAPTURED_AT = "2026-03-02T10:00:00Z"


def write_json(rel, value):
    path = os.path.join(ROOT, rel)
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(value, f, indent=2, ensure_ascii=False)
        f.write("\n")


def interface_id(url):
    parts = urlsplit(url)
    origin = f"{parts.scheme}://{parts.hostname}" + (f":{parts.port}" if parts.port else "")
    path = parts.path or "/"
    return hashlib.sha256((origin + path).encode()).hexdigest()[:16]


class Page:
    """Flat snapshot builder. Also records the element each node should
    produce, in document order, with the section it sits in."""

    def __init__(self, url, title, width=1440, height=900):
        self.url, self.title = url, title
        self.nodes = []
        self.expected = []
        self.root = self.node(None, "body", bbox=(0, 0, width, height))

    def node(self, parent, tag, text="", attrs=None, bbox=(0, 0, 10, 10), flags=("visible",)):
        nid = len(self.nodes)
        x, y, w, h = bbox
        self.nodes.append({
            "id": nid, "tag": tag, "text": text, "attrs": dict(attrs or {}), "children": [],
            "bbox": None if bbox is None else {"x": x, "y": y, "w": w, "h": h},
            "flags": sorted(flags),
        })
        if parent is not None:
            self.nodes[parent]["children"].append(nid)
        return nid

    def element(self, parent, role, label, section, tag, **kw):
        nid = self.node(parent, tag, **kw)
        self.expected.append({"node_id": nid, "role": role, "label": label, "section": section})
        return nid

    def snapshot(self):
        return {"url": self.url, "title": self.title, "captured_at": CAPTURED_AT, "nodes": self.nodes}

    def elements(self):
        out = []
        for i, e in enumerate(self.expected):
            target = f"[{e['role']}] {e['label']}"
            grounding = target if not e["section"] else f"{target} — {e['section']}"
            out.append(dict(index=i, **e, target=target, grounding_text=grounding))
        return out


def voyager():
    p = Page("https://voyager.insitu.test/app/cars?dataset=cars", "Voyager 2 - Cars")
    b = p.root
    btn = ("visible", "focusable")
    pill = ("visible", "pointer_cursor")
    handler = ("visible", "clickable_handler")

    head = p.node(b, "header", bbox=(0, 0, 1440, 48))
    p.element(head, "text", "Voyager 2", "", "h1", text="Voyager 2", bbox=(16, 8, 160, 32))
    p.element(head, "link", "Undo", "Voyager 2", "a", text="Undo", attrs={"href": "#undo"}, bbox=(200, 14, 40, 20), flags=btn)
    p.element(head, "link", "Redo", "Voyager 2", "a", text="Redo", attrs={"href": "#redo"}, bbox=(250, 14, 40, 20), flags=btn)
    p.element(head, "button", "Bookmarks", "Voyager 2", "button", text="Bookmarks", bbox=(1200, 10, 100, 28), flags=btn)
    clear = p.element(head, "button", "Clear", "Voyager 2", "button", bbox=(1310, 10, 80, 28), flags=btn)
    # Label comes from the descendant text.
    p.node(clear, "span", text="Clear", bbox=(1318, 14, 60, 20))
    # Hidden and disabled nodes never become elements.
    p.node(head, "button", text="Debug", bbox=(1400, 10, 30, 28), flags=("focusable",))
    p.node(head, "button", text="Share", bbox=(1360, 50, 60, 28), flags=("visible", "disabled"))

    data = p.node(b, "section", attrs={"class": "panel data"}, bbox=(0, 56, 300, 90))
    p.element(data, "text", "Data", "", "h2", text="Data", bbox=(8, 60, 200, 24))
    p.element(data, "select-data", "Cars", "Data", "select", text="Cars", attrs={"name": "dataset"}, bbox=(8, 90, 200, 28), flags=btn)
    p.element(data, "button", "Change", "Data", "button", text="Change", bbox=(216, 90, 76, 28), flags=btn)

    fields = p.node(b, "section", attrs={"class": "panel fields"}, bbox=(0, 150, 300, 420))
    p.element(fields, "text", "Fields", "", "h2", text="Fields", bbox=(8, 154, 200, 24))
    p.element(fields, "input", "Search fields", "Fields", "input", attrs={"type": "search", "aria-label": "Search fields"}, bbox=(8, 182, 284, 26), flags=btn)
    field_list = p.node(fields, "ul", bbox=(8, 212, 284, 300))
    pills = ["Name", "Cylinders", "Displacement", "Horsepower", "Miles_per_Gallon", "Weight_in_lbs", "Acceleration", "Year", "Origin"]
    for i, name in enumerate(pills):
        li = p.node(field_list, "li", bbox=(8, 212 + 30 * i, 284, 28))
        p.element(li, "link button", name, "Fields", "a", text=name, attrs={"role": "button", "data-field": name}, bbox=(12, 214 + 30 * i, 200, 24), flags=pill)
    wild = p.node(fields, "div", attrs={"class": "wildcards"}, bbox=(8, 485, 284, 60))
    p.element(wild, "link button", "Any Quantitative", "Fields", "a", text="Any Quantitative", attrs={"role": "button"}, bbox=(12, 488, 200, 24), flags=pill)
    p.element(wild, "link button", "Any Categorical", "Fields", "a", text="Any Categorical", attrs={"role": "button"}, bbox=(12, 516, 200, 24), flags=pill)

    enc = p.node(b, "section", attrs={"class": "panel encoding"}, bbox=(310, 56, 260, 420))
    p.element(enc, "text", "Encoding", "", "h2", text="Encoding", bbox=(318, 60, 200, 24))
    p.element(enc, "select-data", "Mark type", "Encoding", "select", text="point", attrs={"aria-label": "Mark type"}, bbox=(318, 88, 240, 26), flags=btn)
    shelves = p.node(enc, "div", attrs={"class": "shelves"}, bbox=(318, 120, 240, 350))
    for i, ch in enumerate(["X", "Y", "Row", "Column", "Size", "Color", "Shape", "Detail", "Text"]):
        shelf = p.element(shelves, "control", f"{ch} channel", "Encoding", "div", attrs={"aria-label": f"{ch} channel", "class": "shelf"}, bbox=(318, 120 + 38 * i, 240, 34), flags=handler)
        p.node(shelf, "span", text="drop a field here", bbox=(330, 126 + 38 * i, 120, 20))

    flt = p.node(b, "section", attrs={"class": "panel filter"}, bbox=(310, 480, 260, 160))
    p.element(flt, "text", "Filter", "", "h2", text="Filter", bbox=(318, 484, 200, 24))
    p.element(flt, "control", "Horsepower minimum", "Filter", "input", attrs={"type": "range", "aria-label": "Horsepower minimum", "min": "0", "max": "250"}, bbox=(318, 512, 240, 24), flags=btn)
    p.element(flt, "input", "Year from", "Filter", "input", attrs={"type": "text", "aria-label": "Year from"}, bbox=(318, 540, 120, 24), flags=btn)
    p.element(flt, "control", "Include missing values", "Filter", "input", attrs={"type": "checkbox", "aria-label": "Include missing values"}, bbox=(318, 568, 20, 20), flags=btn)
    p.element(flt, "button", "Add filter", "Filter", "button", text="Add filter", bbox=(318, 596, 100, 28), flags=btn)

    view = p.node(b, "main", attrs={"class": "specified-view"}, bbox=(580, 56, 560, 520))
    p.element(view, "text", "Specified View", "", "h2", text="Specified View", bbox=(588, 60, 300, 24))
    toolbar = p.node(view, "div", attrs={"class": "toolbar"}, bbox=(588, 88, 540, 30))
    for i, label in enumerate(["Bookmark", "Specify", "Sort", "Transpose", "Export"]):
        p.element(toolbar, "button", label, "Specified View", "button", text=label, bbox=(588 + 90 * i, 88, 84, 28), flags=btn)
    p.element(view, "canvas-region", "Specified view chart", "Specified View", "canvas", attrs={"aria-label": "Specified view chart"}, bbox=(588, 124, 540, 440), flags=handler)

    rel = p.node(b, "aside", attrs={"class": "related-views"}, bbox=(1150, 56, 290, 760))
    p.element(rel, "text", "Related Views", "", "h2", text="Related Views", bbox=(1158, 60, 260, 24))
    for i in range(3):
        p.element(rel, "canvas-region", f"Related view {i + 1}", "Related Views", "canvas", attrs={"aria-label": f"Related view {i + 1}"}, bbox=(1158, 90 + 220 * i, 270, 210), flags=handler)
    p.element(rel, "link", "Show more views", "Related Views", "a", text="Show more views", attrs={"href": "#more"}, bbox=(1158, 760, 200, 24), flags=btn)

    foot = p.node(b, "footer", bbox=(0, 860, 1440, 40))
    p.element(foot, "text", "Cars dataset, 406 rows", "", "p", text="Cars dataset,   406 rows", bbox=(8, 866, 400, 24))
    # Zero-area and off-screen helpers stay out of the listing.
    p.node(foot, "button", text="Feedback", bbox=(900, 866, 0, 0), flags=btn)
    return p


def playground():
    p = Page("https://playground.insitu.test/form", "Form Playground", width=1024, height=768)
    b = p.root
    btn = ("visible", "focusable")
    p.element(b, "text", "Create your profile", "", "h1", text="Create your profile", bbox=(24, 16, 500, 40))

    # Everything after the h1 at body level falls under its section.
    prof = p.node(b, "form", attrs={"id": "profile"}, bbox=(24, 64, 600, 260))
    p.element(prof, "text", "Profile", "Create your profile", "h2", text="Profile", bbox=(24, 64, 200, 28))
    p.element(prof, "input", "Full name", "Profile", "input", attrs={"type": "text", "aria-label": "Full name"}, bbox=(24, 100, 300, 28), flags=btn)
    p.element(prof, "input", "Email address", "Profile", "input", attrs={"type": "email", "aria-label": "Email address"}, bbox=(24, 136, 300, 28), flags=btn)
    p.element(prof, "select-data", "Country", "Profile", "select", attrs={"aria-label": "Country"}, bbox=(24, 172, 300, 28), flags=btn)
    p.element(prof, "input", "Favorite color", "Profile", "input", attrs={"type": "text", "aria-label": "Favorite color"}, bbox=(24, 208, 300, 28), flags=btn)
    p.element(prof, "input", "Age", "Profile", "input", attrs={"type": "number", "aria-label": "Age"}, bbox=(24, 244, 120, 28), flags=btn)

    pref = p.node(b, "form", attrs={"id": "prefs"}, bbox=(24, 330, 600, 220))
    p.element(pref, "text", "Preferences", "Create your profile", "h2", text="Preferences", bbox=(24, 330, 200, 28))
    p.element(pref, "input", "Notification volume", "Preferences", "input", attrs={"type": "text", "aria-label": "Notification volume"}, bbox=(24, 366, 300, 28), flags=btn)
    p.element(pref, "control", "Subscribe to newsletter", "Preferences", "input", attrs={"type": "checkbox", "aria-label": "Subscribe to newsletter"}, bbox=(24, 402, 20, 20), flags=btn)
    p.element(pref, "control", "Dark theme", "Preferences", "input", attrs={"type": "checkbox", "aria-label": "Dark theme"}, bbox=(24, 430, 20, 20), flags=btn)
    p.element(pref, "text", "Changes apply after saving.", "Preferences", "p", text="Changes apply after saving.", bbox=(24, 460, 400, 20))

    actions = p.node(b, "div", attrs={"class": "actions"}, bbox=(24, 560, 600, 40))
    p.element(actions, "button", "Save profile", "Create your profile", "button", text="Save profile", attrs={"type": "submit"}, bbox=(24, 560, 140, 32), flags=btn)
    p.element(actions, "button", "Reset form", "Create your profile", "input", attrs={"type": "reset", "aria-label": "Reset form"}, bbox=(180, 560, 140, 32), flags=btn)
    p.element(actions, "link", "Privacy policy", "Create your profile", "a", text="Privacy policy", attrs={"href": "/privacy"}, bbox=(340, 566, 120, 20), flags=btn)
    return p


def cosine(ca, cb):
    dot = sum(x * y for x, y in zip(ca, cb))
    return dot / math.sqrt(sum(x * x for x in ca) * sum(y * y for y in cb))


def golden_cases(els):
    t = {e["label"]: e for e in els}

    def target(label):
        return t[label]["target"]

    def node(label):
        return t[label]["node_id"]

    return [
        ("insert.overlay_tip", {
            "assistance": "Explain what the Cylinders field holds.",
            "whyItHelps": "Users unsure what Cylinders counts can read a tip under the field.",
            "domSubtype": "insert.overlay_tip",
            "targets": [{"uiDescription": target("Cylinders")}],
            "configuration": {"tip_text": "Number of engine cylinders (3 to 8).", "placement": "below"},
            "category": "WHAT",
        }, {"op_kinds": ["anchor_overlay"], "target_nodes": [node("Cylinders")], "created": 1}),
        ("insert.inline_control", {
            "assistance": "Add a reset button next to the dataset switcher.",
            "whyItHelps": "Users who changed the dataset by mistake can return to Cars in one click.",
            "domSubtype": "insert.inline_control",
            "targets": [{"uiDescription": target("Change")}],
            "configuration": {"placement": "adjacent", "detail": {"controlType": "button", "label": "Back to Cars", "action": {"type": "reset-dataset"}}},
            "category": "HOW",
        }, {"op_kinds": ["create_node"], "target_nodes": [node("Change")], "created": 1}),
        ("insert.widget", {
            "assistance": "Offer a panel for saving chart configurations.",
            "whyItHelps": "Users who want to compare encodings can save and revisit them.",
            "domSubtype": "insert.widget",
            "targets": [{"uiDescription": target("Specified view chart")}],
            "configuration": {"title": "Saved views", "body": "Keep the **current chart** to compare later.",
                              "controls": [{"label": "Save", "action": "save_snapshot"}, {"label": "Notify", "action": {"emit_event": "saved"}}, {"label": "Close", "action": "dismiss"}]},
            "category": "CAN",
        }, {"op_kinds": ["mount_widget"], "target_nodes": [node("Specified view chart")], "created": 6}),
        ("mutate.style", {
            "assistance": "Outline the positional channels.",
            "whyItHelps": "Users who cannot find where to place fields for the axes can spot the X and Y shelves.",
            "domSubtype": "mutate.style",
            "targets": [{"uiDescription": target("X channel")}, {"uiDescription": target("Y channel")}],
            "configuration": {"properties": {"outline": "3px solid #f59e0b", "animation-pulse": "1.5s"}},
            "category": "WHERE",
        }, {"op_kinds": ["set_style", "set_style"], "target_nodes": [node("X channel"), node("Y channel")], "created": 0}),
        ("mutate.representation", {
            "assistance": "Turn the year box into a slider.",
            "whyItHelps": "Users who do not know which years exist can drag instead of typing.",
            "domSubtype": "mutate.representation",
            "targets": [{"uiDescription": target("Year from")}],
            "configuration": {"from_modality": "text", "to_modality": "slider"},
            "category": "HOW",
        }, {"op_kinds": ["set_attribute"] * 4, "target_nodes": [node("Year from")] * 4, "created": 0}),
        ("mutate.reframe", {
            "assistance": "Rename Specify to say what it does.",
            "whyItHelps": "Users confused by Specify learn it pins the chart as the main view.",
            "domSubtype": "mutate.reframe",
            "targets": [{"uiDescription": target("Specify")}],
            "configuration": {"new_text": "Pin as main view"},
            "category": "WHAT",
        }, {"op_kinds": ["set_text"], "target_nodes": [node("Specify")], "created": 0}),
        ("recompose.reorder", {
            "assistance": "Put the engine fields in a natural order.",
            "whyItHelps": "Users looking for engine measures find them next to each other.",
            "domSubtype": "recompose.reorder",
            "targets": [{"uiDescription": target(x)} for x in ["Any Quantitative", "Any Categorical"]],
            "configuration": {"order": [target("Any Categorical"), target("Any Quantitative")]},
            "category": "NEXT",
        }, {"op_kinds": ["move_node", "move_node"], "target_nodes": [node("Any Quantitative"), node("Any Categorical")], "created": 0, "unordered_targets": True}),
        ("recompose.group", {
            "assistance": "Group the mark property channels.",
            "whyItHelps": "Users who do not know which channels change appearance see them grouped.",
            "domSubtype": "recompose.group",
            "targets": [{"uiDescription": target(x)} for x in ["Size channel", "Color channel", "Shape channel"]],
            "configuration": {"group_label": "Mark properties"},
            "category": "WHERE",
        }, {"op_kinds": ["create_node", "move_node", "move_node", "move_node"],
            "target_nodes": [node("Size channel"), node("Size channel"), node("Color channel"), node("Shape channel")], "created": 2}),
        ("recompose.layout", {
            "assistance": "Show the third related view first.",
            "whyItHelps": "Users who want the most relevant suggestion see it at the top.",
            "domSubtype": "recompose.layout",
            "targets": [{"uiDescription": target(x)} for x in ["Related view 1", "Related view 3"]],
            "configuration": {"order": [target("Related view 3"), target("Related view 1")]},
            "category": "NEXT",
        }, {"op_kinds": ["move_node", "move_node"], "target_nodes": [node("Related view 1"), node("Related view 3")], "created": 0, "unordered_targets": True}),
    ]


# Targets written the way a generator would paraphrase them, and the
# element under the mock embedder they should ground to.
PARAPHRASES = [
    "the horsepower field",
    "undo link",
    "the cars selector",
    "color channel shelf",
    "chart of the current specification",
    "search box for fields",
    "export the chart",
    "add a new filter",
    "minimum horsepower slider",
    "more related views link",
]

# 20 exact descriptors, by label.
EXACT = [
    "Undo", "Bookmarks", "Cars", "Change", "Search fields", "Cylinders", "Horsepower", "Year",
    "Any Categorical", "Mark type", "X channel", "Color channel", "Detail channel", "Year from",
    "Add filter", "Sort", "Export", "Specified view chart", "Related view 2", "Show more views",
]

DATASET = {
    "voyager": [
        ("WHAT", "What does the Cylinders field mean?", "Show a tip under the Cylinders field explaining it counts engine cylinders."),
        ("WHAT", "what is a related view", "Anchor a tip to the related views panel explaining they are suggested charts."),
        ("WHAT", "What does Specify do?", "Rename Specify to describe that it pins the chart."),
        ("WHERE", "Where do I put a field to make it the x axis?", "Highlight the X channel shelf."),
        ("WHERE", "I cannot find the sort control", "Outline the Sort button in the toolbar."),
        ("WHERE", "where can I switch the dataset", "Highlight the dataset selector and the Change button."),
        ("HOW", "How do I filter out cars with low horsepower?", "Insert a helper next to the Horsepower minimum slider."),
        ("HOW", "how do I enter a year range", "Turn the Year from box into a slider."),
        ("WHY", "Why did the chart change when I clicked Transpose?", "Anchor an explanation to Transpose saying it swaps the axes."),
        ("NEXT", "What should I do after choosing a mark type?", "Pulse the X channel shelf as the next step."),
        ("CAN", "Can I save a chart and compare it with another one?", "Mount a widget that saves chart snapshots."),
        ("CAN", "can I undo my last change", "Highlight the Undo link."),
    ],
    "playground": [
        ("WHAT", "What is the email address used for?", "Show a tip next to the Email address field."),
        ("WHERE", "Where do I choose my country?", "Highlight the Country selector."),
        ("WHERE", "I can't find the save button", "Pulse the Save profile button."),
        ("HOW", "How do I pick a favorite color?", "Turn the Favorite color input into a color picker."),
        ("HOW", "how do I set the notification volume", "Turn the volume box into a slider."),
        ("WHY", "Why did my changes disappear after reset?", "Explain beside Reset form that it clears every field."),
        ("WHY", "why is dark theme not applied yet", "Tip beside Dark theme saying changes apply after saving."),
        ("WHY", "Why do I need to enter my age?", "Tip beside Age explaining the requirement."),
        ("NEXT", "What do I do after filling in my name?", "Pulse the Email address field."),
        ("NEXT", "next step after preferences", "Pulse the Save profile button."),
        ("CAN", "Can I unsubscribe from the newsletter later?", "Tip beside the newsletter checkbox explaining it can be changed."),
        ("NEXT", "what comes after choosing a country", "Pulse the Favorite color input."),
    ],
}

SEARCH = {
    "Voyager 2 - Cars": [
        ("https://docs.voyager.insitu.test/overview", "Voyager 2 overview", "Voyager 2 is a visualization tool that blends manual chart specification with automatically recommended related views."),
        ("https://docs.voyager.insitu.test/encoding", "Encoding shelves", "Drag fields onto the x, y, color, size and shape shelves to encode them; the mark type selects points, bars or lines."),
        ("https://docs.voyager.insitu.test/wildcards", "Wildcard fields", "Wildcards such as Any Quantitative enumerate fields of one type to explore many charts at once."),
    ],
    "Form Playground": [
        ("https://docs.playground.insitu.test/forms", "Form Playground guide", "A sample profile form with text inputs, selectors, checkboxes and save or reset actions."),
    ],
}


def search_query(title):
    return f"{title.strip()} tutorial documentation features"


def main():
    pages = {"voyager": voyager(), "playground": playground()}
    for name, page in pages.items():
        write_json(f"snapshots/{name}.json", page.snapshot())
        write_json(f"snapshots/{name}.elements.json", page.elements())

    els = pages["voyager"].elements()
    assert len(els) == 50, len(els)

    for subtype, case, expect in golden_cases(els):
        write_json(f"golden/{subtype}.json", {"snapshot": "../snapshots/voyager.json", "case": case, "expect": expect})

    by_label = {e["label"]: e for e in els}
    vecs = [counts(e["grounding_text"]) for e in els]
    paraphrases = []
    for text in PARAPHRASES:
        q = counts(text)
        sims = [cosine(q, v) for v in vecs]
        best = max(range(len(sims)), key=lambda i: (sims[i], -i))
        ranked = sorted(sims, reverse=True)
        paraphrases.append({"description": text, "oracle_index": best, "oracle_label": els[best]["label"],
                            "oracle_similarity": sims[best], "margin": ranked[0] - ranked[1]})
    write_json("grounding/voyager_targets.json", {
        "snapshot": "../snapshots/voyager.json",
        "exact": [{"description": by_label[l]["target"], "element_index": by_label[l]["index"]} for l in EXACT],
        "paraphrase": paraphrases,
    })

    lines = []
    for name, rows in DATASET.items():
        page = pages[name]
        for i, (cat, challenge, ref) in enumerate(rows):
            lines.append(json.dumps({
                "record_id": f"{name}-{i + 1:02d}", "interface_id": interface_id(page.url), "category": cat,
                "challenge": challenge, "snapshot_path": f"../snapshots/{name}.json", "reference_assistance": ref,
            }, ensure_ascii=False))
    with open(os.path.join(ROOT, "eval", "dataset.jsonl"), "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")

    for title, results in SEARCH.items():
        slug = title.split()[0].lower()
        doc = {"query": search_query(title), "results": [{"url": u, "title": t, "snippet": s} for u, t, s in results]}
        for root in ("mock", "mock_judge"):
            write_json(f"{root}/search/{slug}.json", doc)

    # A judge that over-scores, to exercise clamping.
    path = os.path.join(ROOT, "mock_judge", "generation", "judge", "default.txt")
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w") as f:
        f.write('{"score": 15, "reasoning": "addresses the need"}\n')

    print(f"voyager: {len(els)} elements, playground: {len(pages['playground'].expected)} elements")
    for p in paraphrases:
        print(f"  {p['description']!r} -> #{p['oracle_index']} {p['oracle_label']} ({p['oracle_similarity']:.3f}, margin {p['margin']:.3f})")


if __name__ == "__main__":
    main()
