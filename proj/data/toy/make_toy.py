#!/usr/bin/env python3
"""Regenerates the toy synthesis corpus in this directory.

Outputs: samples.jsonl, script.json, sandbox.json, corpus.jsonl, oracle.json,
eval_math.jsonl, eval_qa.jsonl. Python snippets are executed here to fill the
sandbox table, and every item carries its category label by construction.
"""
import contextlib
import io
import json
import os

HERE = os.path.dirname(os.path.abspath(__file__))

# Fictional facts for the search tool.
FACTS = [
    ("k01", "Varnholt Observatory", "The Varnholt Observatory was founded in 1887 on the hills above Lake Tessin.", "1887"),
    ("k02", "Orlen River", "The Orlen River is 412 kilometres long and drains into the Gulf of Maro.", "412"),
    ("k03", "Quill Bridge", "The Quill Bridge was designed by the engineer Hedda Marsk and opened to traffic in 1931.", "Hedda Marsk"),
    ("k04", "Saint Ivo Island", "Saint Ivo Island has a population of 3,200 and its capital is Port Lerrin.", "Port Lerrin"),
    ("k05", "Tallow Peak", "Tallow Peak rises to 2,945 metres and is the highest point of the Brenn range.", "2945"),
    ("k06", "Corvane Library", "The Corvane Library holds 86,000 volumes and was endowed by the merchant Ansel Corvane.", "86000"),
    ("k07", "Miro Festival", "The Miro Festival is held every year in the town of Ellsworth during the month of October.", "October"),
    ("k08", "Dunmere Canal", "The Dunmere Canal links the city of Harlow to the port of Breck and has 14 locks.", "14"),
    ("k09", "Pell Lighthouse", "The Pell Lighthouse was painted red and white in 1902 and stands 38 metres tall.", "38"),
    ("k10", "Ostrava Prize", "The Ostrava Prize for chemistry was first awarded to Lena Vuorinen.", "Lena Vuorinen"),
    ("k11", "Garran Forest", "Garran Forest covers 120 square kilometres and is home to the grey lynx.", "grey lynx"),
    ("k12", "Halden Clock", "The Halden Clock tower chimes 7 times at noon, a tradition started by mayor Otto Brask.", "Otto Brask"),
    ("k13", "Rell Mountains", "The Rell Mountains separate the provinces of Aster and Vey.", "Vey"),
    ("k14", "Sable Theatre", "The Sable Theatre seats 640 people and opened in 1958 with a production of a comic opera.", "640"),
    ("k15", "Linden Railway", "The Linden Railway runs 57 kilometres between Corra and Fensby.", "57"),
    ("k16", "Amber Guild", "The Amber Guild of weavers was founded by Mira Solt in the town of Keld.", "Mira Solt"),
    ("k17", "Hollin Dam", "The Hollin Dam was completed in 1964 and holds back the waters of the Sarn.", "1964"),
    ("k18", "Ferro Academy", "The Ferro Academy of music admits 90 students each year.", "90"),
    ("k19", "Wendle Cathedral", "Wendle Cathedral has a spire of green copper and was built by the architect Paul Ormsby.", "Paul Ormsby"),
    ("k20", "Kestrel Pass", "Kestrel Pass crosses the Brenn range at an altitude of 1,780 metres.", "1780"),
]
FILLER_DOCS = [
    ("f01", "Lake Tessin", "Lake Tessin is a shallow lake known for its autumn fog and small fishing villages."),
    ("f02", "Gulf of Maro", "The Gulf of Maro is a wide bay with strong tides and several sandbanks."),
    ("f03", "Brenn range", "The Brenn range is a chain of limestone mountains with many caves."),
    ("f04", "Port Lerrin", "Port Lerrin is a harbour town with a fish market and a stone church."),
    ("f05", "Harlow", "Harlow is an old market city famous for its covered bridges."),
    ("f06", "Ellsworth", "Ellsworth is a town surrounded by orchards and vineyards."),
]

MATH = [
    ("What is 17 * 23?", "print(17 * 23)"),
    ("What is 2 ** 10 + 3?", "print(2 ** 10 + 3)"),
    ("What is the sum of the integers from 1 to 100?", "print(sum(range(1, 101)))"),
    ("What is 1234 + 5678?", "print(1234 + 5678)"),
    ("How many seconds are in 3 hours?", "print(3 * 60 * 60)"),
    ("What is 144 / 12?", "print(144 // 12)"),
    ("What is 99 * 99?", "print(99 * 99)"),
    ("What is the product of 12, 13 and 14?", "print(12 * 13 * 14)"),
    ("What is 7 factorial?", "import math\nprint(math.factorial(7))"),
    ("What is the remainder of 1000 divided by 37?", "print(1000 % 37)"),
    ("What is 3 ** 7?", "print(3 ** 7)"),
    ("What is the greatest common divisor of 462 and 1071?", "import math\nprint(math.gcd(462, 1071))"),
    ("What is 15 squared minus 8 squared?", "print(15 ** 2 - 8 ** 2)"),
    ("How many minutes are in a week?", "print(7 * 24 * 60)"),
    ("What is 256 * 4 - 100?", "print(256 * 4 - 100)"),
    ("What is the sum of the first 10 odd numbers?", "print(sum(range(1, 20, 2)))"),
    ("What is 11 * 11 * 11?", "print(11 ** 3)"),
    ("What is 5000 minus 1234?", "print(5000 - 1234)"),
    ("What is the least common multiple of 4, 6 and 10?", "import math\nprint(math.lcm(4, 6, 10))"),
    ("What is 123 * 321?", "print(123 * 321)"),
    ("What is 2 ** 16?", "print(2 ** 16)"),
    ("What is 48 * 52?", "print(48 * 52)"),
    ("How many hours are in 5 days?", "print(5 * 24)"),
    ("What is 1001 * 7?", "print(1001 * 7)"),
    ("What is the sum of the squares of 1 through 5?", "print(sum(i * i for i in range(1, 6)))"),
    ("What is 9 * 8 * 7?", "print(9 * 8 * 7)"),
    ("What is 360 divided by 8?", "print(360 // 8)"),
    ("What is 13 squared?", "print(13 ** 2)"),
    ("What is 6 factorial divided by 4 factorial?", "import math\nprint(math.factorial(6) // math.factorial(4))"),
    ("What is 77 + 88 + 99?", "print(77 + 88 + 99)"),
    ("What is 10 ** 3 - 1?", "print(10 ** 3 - 1)"),
    ("What is 31 * 29?", "print(31 * 29)"),
    ("What is 2 ** 8 - 2 ** 4?", "print(2 ** 8 - 2 ** 4)"),
    ("What is 625 divided by 25?", "print(625 // 25)"),
]


def run(code):
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        exec(code, {})
    return buf.getvalue()


sandbox = {}


def py(code):
    sandbox[code] = run(code)
    return "<python>\n" + code + "\n</python>"


def srch(query):
    return "<search>" + query + "</search>"


def answer(a):
    return "<answer>\\boxed{" + a + "}</answer>"


def wrong(a):
    try:
        return str(int(a) + 1)
    except ValueError:
        return a + " Junior"


def direct(a, ok, marker=False):
    mid = "Wait, I am not sure about this. " if marker else ""
    val = a if ok else wrong(a)
    return ("<think>I will work this out without tools. " + mid +
            "The result should be " + val + ".</think>\n" + answer(val))


class Item:
    def __init__(self, iid, question, gold, category, source):
        self.id = iid
        self.question = question
        self.gold = gold
        self.category = category
        self.source = source
        self.kind = "text"
        self.response = None
        self.direct = None
        self.tir = []
        self.hint = []
        self.rejections = []
        self.best_calls = None


def call_turns(call, gold_ans, intro):
    return ["<think>" + intro + "</think>\n" + call,
            "\n<think>The tool output settles it.</think>\n" + answer(gold_ans)]


items = []
math_iter = iter(MATH)
fact_iter = iter(FACTS)
counter = [0]


def new_item(category, use_search):
    counter[0] += 1
    iid = "t%02d" % counter[0]
    if use_search:
        key, title, text, gold = next(fact_iter)
        q = {
            "k01": "In which year was the Varnholt Observatory founded?",
            "k02": "How long is the Orlen River in kilometres?",
            "k03": "Who designed the Quill Bridge?",
            "k04": "What is the capital of Saint Ivo Island?",
            "k05": "How high is Tallow Peak in metres?",
            "k06": "How many volumes does the Corvane Library hold?",
            "k07": "In which month is the Miro Festival held?",
            "k08": "How many locks does the Dunmere Canal have?",
            "k09": "How tall is the Pell Lighthouse in metres?",
            "k10": "Who first received the Ostrava Prize for chemistry?",
            "k11": "Which animal lives in Garran Forest?",
            "k12": "Which mayor started the Halden Clock noon tradition?",
            "k13": "Which province lies across the Rell Mountains from Aster?",
            "k14": "How many seats does the Sable Theatre have?",
            "k15": "How long is the Linden Railway in kilometres?",
            "k16": "Who founded the Amber Guild of weavers?",
            "k17": "In which year was the Hollin Dam completed?",
            "k18": "How many students does the Ferro Academy admit each year?",
            "k19": "Which architect built Wendle Cathedral?",
            "k20": "At what altitude in metres does Kestrel Pass cross the Brenn range?",
        }[key]
        it = Item(iid, q, gold, category, "toy-qa")
        it.call = srch(title)
        it.search_title = title
    else:
        q, code = next(math_iter)
        gold = run(code).strip()
        it = Item(iid, q, gold, category, "toy-math")
        it.code = code
        it.call = None
    items.append(it)
    return it


def tool_call(it):
    return it.call if it.call else py(it.code)


# Cat1: direct ok, prompted TIR ok.
for i in range(12):
    it = new_item("Cat1_DRok_TIRok", use_search=(i % 3 == 2))
    it.direct = direct(it.gold, True)
    if i == 0:
        # Uses both tools.
        s = srch("arithmetic facts")
        it.tir = [["<think>Look it up first.</think>\n" + s,
                   "\n<think>Now compute.</think>\n" + py(it.code),
                   "\n<think>Done.</think>\n" + answer(it.gold)]]
    else:
        it.tir = [call_turns(tool_call(it), it.gold, "Use a tool.")]

# Cat2: direct ok, every TIR attempt wrong, hinted continuation wrong.
for i in range(6):
    it = new_item("Cat2_DRok_TIRbad", use_search=(i % 2 == 1))
    it.direct = direct(it.gold, True)
    it.tir = [call_turns(tool_call(it), wrong(it.gold), "Use a tool.")]
    it.hint = call_turns(tool_call(it), wrong(it.gold), "Checking.")

# Cat3: direct wrong, prompted TIR ok. The first item has attempts with two
# and one calls; the single-call one is the selected record.
for i in range(8):
    it = new_item("Cat3_DRbad_TIRok", use_search=(i % 2 == 1))
    it.direct = direct(it.gold, False)
    if i == 0:
        it.tir = [["<think>First a sanity check.</think>\n" + py("print(1 + 1)"),
                   "\n<think>Now the real computation.</think>\n" + py(it.code),
                   "\n<think>Done.</think>\n" + answer(it.gold)],
                  call_turns(tool_call(it), it.gold, "One call is enough."),
                  call_turns(tool_call(it), wrong(it.gold), "Quick attempt.")]
        it.best_calls = 1
    else:
        it.tir = [call_turns(tool_call(it), it.gold, "Use a tool.")]

# Cat3 via hint-based sampling only.
for i in range(5):
    it = new_item("Cat3_DRbad_TIRok", use_search=(i % 2 == 0))
    it.direct = direct(it.gold, False, marker=True)
    it.tir = [call_turns(tool_call(it), wrong(it.gold), "Use a tool.")]
    # The hint lands inside the think block, so the continuation closes it.
    it.hint = ["</think>\n" + tool_call(it),
               "\n<think>The tool output corrects my earlier guess.</think>\n" + answer(it.gold)]

# Cat4: both wrong.
for i in range(6):
    it = new_item("Cat4_DRbad_TIRbad", use_search=(i % 2 == 1))
    it.direct = direct(it.gold, False)
    it.tir = [call_turns(tool_call(it), wrong(it.gold), "Use a tool.")]

# Correct TIR that repeats a tool request: rejected, so Cat4 (or Cat2).
for i, dr_ok in enumerate([False, False, False, True]):
    it = new_item("Cat2_DRok_TIRbad" if dr_ok else "Cat4_DRbad_TIRbad",
                  use_search=(i % 2 == 0))
    it.direct = direct(it.gold, dr_ok)
    c = tool_call(it)
    it.tir = [["<think>Use a tool.</think>\n" + c,
               "\n<think>Let me run that again to be safe.</think>\n" + c,
               "\n<think>Same output.</think>\n" + answer(it.gold)]]
    it.rejections = ["DuplicateToolCall"]

# One duplicated attempt and one clean attempt: still Cat3.
it = new_item("Cat3_DRbad_TIRok", use_search=False)
it.direct = direct(it.gold, False)
c = py(it.code)
it.tir = [["<think>Use a tool.</think>\n" + c,
           "\n<think>Again.</think>\n" + c,
           "\n<think>Same output.</think>\n" + answer(it.gold)],
          call_turns(c, it.gold, "Use a tool once.")]
it.rejections = ["DuplicateToolCall"]


def seed_response(calls, final):
    parts = []
    for call, fb in calls:
        parts.append("<think>Next step.</think>\n" + call + "<result>\n" + fb + "\n</result>\n")
    parts.append("<think>Finished.</think>\n" + answer(final))
    return "".join(parts)


# Existing TIR seed records.
seeds = [
    ("Cat3_DRbad_TIRok", "clean", True),
    ("Cat3_DRbad_TIRok", "clean", True),
    ("Cat3_DRbad_TIRok", "clean", True),
    ("Cat3_DRbad_TIRok", "alias", True),
    ("Cat4_DRbad_TIRbad", "six", True),
    ("Cat2_DRok_TIRbad", "six", True),
    ("Cat4_DRbad_TIRbad", "dup", True),
    ("Cat4_DRbad_TIRbad", "clean", False),
]
for cat, shape, correct in seeds:
    it = new_item(cat, use_search=False)
    it.kind = "tir"
    it.source = "toy-seed"
    dr_ok = cat.startswith("Cat2") or cat.startswith("Cat1")
    it.direct = direct(it.gold, dr_ok)
    out = run(it.code).strip()
    final = it.gold if correct else wrong(it.gold)
    if shape == "clean":
        it.response = seed_response([(py(it.code), out)], final)
    elif shape == "alias":
        it.response = ("<think>Compute it.</think>\n<code>\n" + it.code + "\n</code>"
                       "<information>\n" + out + "\n</information>\n" + answer(final))
    elif shape == "six":
        calls = [(py("print(%d)" % k), str(k)) for k in range(1, 6)]
        calls.append((py(it.code), out))
        it.response = seed_response(calls, final)
        it.rejections = ["FrequencyExceeded"]
    elif shape == "dup":
        it.response = seed_response([(py(it.code), out), (py(it.code), out)], final)
        it.rejections = ["DuplicateToolCall"]

assert len(items) == 50, len(items)

route = {"Cat1_DRok_TIRok": "d_text_sub", "Cat2_DRok_TIRbad": "d_text_sub",
         "Cat3_DRbad_TIRok": "d_tool_sub", "Cat4_DRbad_TIRbad": "d_rl"}


def dump_jsonl(name, rows):
    with open(os.path.join(HERE, name), "w") as f:
        for r in rows:
            f.write(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n")


samples = []
for it in items:
    s = {"id": it.id, "question": it.question, "gold": it.gold,
         "source": it.source, "kind": it.kind}
    if it.response is not None:
        s["response"] = it.response
    samples.append(s)
dump_jsonl("samples.jsonl", samples)

questions = {}
for it in items:
    e = {"direct": it.direct}
    if it.tir:
        e["tir"] = it.tir
    if it.hint:
        e["hint"] = it.hint
    questions[it.question] = e
script = {"questions": questions, "prompts": []}
with open(os.path.join(HERE, "script.json"), "w") as f:
    json.dump(script, f, indent=1, ensure_ascii=False, sort_keys=True)
    f.write("\n")

with open(os.path.join(HERE, "sandbox.json"), "w") as f:
    json.dump([{"code": c, "stdout": o} for c, o in sorted(sandbox.items())], f, indent=1)
    f.write("\n")

docs = [{"id": k, "title": t, "text": x} for k, t, x, _ in FACTS]
docs += [{"id": k, "title": t, "text": x} for k, t, x in FILLER_DOCS]
dump_jsonl("corpus.jsonl", docs)

oracle = {
    "categories": {it.id: it.category for it in items},
    "rejections": sorted([{"id": it.id, "reason": r} for it in items for r in it.rejections],
                         key=lambda r: (r["id"], r["reason"])),
    "d_text_sub": sorted(it.id for it in items if route[it.category] == "d_text_sub"),
    "d_tool_sub": sorted(it.id for it in items if route[it.category] == "d_tool_sub"),
    "d_rl": sorted(it.id for it in items if route[it.category] == "d_rl"),
    "best_calls": {it.id: it.best_calls for it in items if it.best_calls is not None},
}
with open(os.path.join(HERE, "oracle.json"), "w") as f:
    json.dump(oracle, f, indent=1, sort_keys=True)
    f.write("\n")

# Evaluation splits: math items score with EM, knowledge items with F1.
dump_jsonl("eval_math.jsonl", [{"id": it.id, "question": it.question, "answer": it.gold}
                               for it in items if it.source == "toy-math"][:12])
dump_jsonl("eval_qa.jsonl", [{"id": it.id, "question": it.question, "answer": it.gold}
                             for it in items if it.source == "toy-qa"])
print("wrote", len(items), "items")
