"""Hand-written gesture costs and the canned programs served in offline mode.

Conventions shared by every preset: fingers flex towards ``-z``, so a low
fingertip ``z`` means curled towards the palm and a high one means straight;
the thumb counts as straight when its tip lies far along its own extension
direction. Finger indices come from each preset's role map, so the same
gesture reads differently on, say, the Allegro-like hand (0 thumb, 1 ring,
2 middle, 3 index) and a five-fingered hand.
"""

from __future__ import annotations

import re

from .dsl import parse_cost


def _role(config, name):
    roles = config.finger_roles
    if name not in roles:
        raise KeyError(f"hand {config.name!r} has no {name} finger")
    return roles[name]


def direction_literal(config, finger):
    n = config.extension_directions[finger]
    return "[" + ", ".join(f"{v:.4f}" for v in n) + "]"


def _straight_thumb(config):
    t = _role(config, "thumb")
    return f"neg(dot(tip({t}), {direction_literal(config, t)}))"


def _mean_z(fingers):
    zs = [f"tip({f}).z" for f in fingers]
    return zs[0] if len(zs) == 1 else "mean(" + ", ".join(zs) + ")"


def _others(config, *exclude):
    skip = {_role(config, r) for r in exclude}
    return [i for i in range(config.num_fingers) if i not in skip]


def thumbup_source(config):
    """Thumb straight, every other finger curled towards the palm."""
    return f"{_straight_thumb(config)} + {_mean_z(_others(config, 'thumb'))}"


def ok_source(config):
    """Thumb and index tips together, the remaining fingers straight."""
    t, i = _role(config, "thumb"), _role(config, "index")
    return f"norm(tip({t}) - tip({i})) + neg({_mean_z(_others(config, 'thumb', 'index'))})"


def ok_eq_source(config):
    """Pinch distance minus the extension of every non-pinching finger along its
    preferred direction ``n_i``."""
    t, i = _role(config, "thumb"), _role(config, "index")
    ext = [f"dot(tip({j}), {direction_literal(config, j)})" for j in _others(config, "thumb", "index")]
    pinch = f"norm(tip({t}) - tip({i}))"
    if not ext:
        return pinch
    return pinch + " - " + (ext[0] if len(ext) == 1 else "(" + " + ".join(ext) + ")")


def _little_or_ring(config):
    roles = config.finger_roles
    return roles["little"] if "little" in roles else _role(config, "ring")


def scissors_source(config):
    """Index and middle straight, thumb pinching the ring finger."""
    t, r = _role(config, "thumb"), _role(config, "ring")
    straight = [_role(config, "index"), _role(config, "middle")]
    return f"norm(tip({t}) - tip({r})) + neg({_mean_z(straight)})"


def rockandroll_source(config):
    """Index and little (or ring) straight, thumb pinching the middle finger."""
    t, m = _role(config, "thumb"), _role(config, "middle")
    straight = [_role(config, "index"), _little_or_ring(config)]
    return f"norm(tip({t}) - tip({m})) + neg({_mean_z(straight)})"


def call_source(config):
    """Thumb and little (or ring) straight, index and middle curled."""
    curled = [_role(config, "index"), _role(config, "middle")]
    return (f"{_straight_thumb(config)} + neg(tip({_little_or_ring(config)}).z)"
            f" + {_mean_z(curled)}")


EXEMPLARS = {
    "thumbup": ("thumb up: thumb straight, other fingers curled", thumbup_source),
    "ok": ("ok: thumb and index fingertips touching, other fingers straight", ok_source),
}

GENERATED = {
    "scissors": scissors_source,
    "rockandroll": rockandroll_source,
    "call": call_source,
    "thumbup": thumbup_source,
    "ok": ok_source,
}

ALIASES = {
    "scissorhands": "scissors",
    "scissorshand": "scissors",
    "rockroll": "rockandroll",
    "rocknroll": "rockandroll",
    "calling": "call",
    "thumbsup": "thumbup",
}


def request_key(request):
    key = re.sub(r"[^a-z0-9]", "", request.lower())
    return ALIASES.get(key, key)


def exemplars_for(config, names=("thumbup", "ok")):
    """``[(name, description, source)]`` for the prompt, validated against the hand."""
    out = []
    for name in names:
        desc, make = EXEMPLARS[name]
        src = make(config)
        parse_cost(src, config.num_fingers)
        out.append((name, desc, src))
    return out


def canned_reply(config, request):
    """Offline reply text for a request, or ``None`` when nothing is canned."""
    make = GENERATED.get(request_key(request))
    if make is None:
        return None
    try:
        src = make(config)
    except KeyError:
        return None
    return f"Cost for {request_key(request)} on the {config.name} hand:\n```dsl\n{src}\n```\n"
