"""Built-in profile pack used by the CLI experiments and tests.

The pack covers the class structures the experiments need:

* 7 Classic and 7 LowEnergy device profiles.  Packet sizes identify the
  device; burst timing and meta-echo rates cluster by chipset, so the
  same traces support both device and chipset identification.
* 38 high-volume app profiles laid out on a 7 x 6 grid of size atoms
  and intra-burst gap scales.  Counts, direction split, and inter-burst
  gaps are shared across all of them, so exactly one property family
  separates any two apps that share a row or column of the grid.  This
  is what makes the shaping defenses measurable: padding erases the
  size axis, second-granularity delaying erases the sub-second timing
  axis, and dummy injection floods both counts and timing.
* 18 low-volume app profiles that stay far below the fine-grained size
  range and differ only marginally in timing; they are intentionally
  near-indistinguishable.
* 6 action profiles of one logging app that share sizes and differ in
  the pause between their two interaction bursts.
* 20 (device, app, action) combination profiles for the wide scan.
* 10 separable interaction profiles plus an idle background for the
  continuous-day stream experiment.
"""

from __future__ import annotations

from .core import Flavor
from .synth import ActionSpec, CountDist, DayPlan, Profile, ProfilePack, SizeMixture

CLASSIC_DEVICES = ("watchA", "watchB", "watchC", "watchD", "watchE", "budsA", "budsB")
LE_DEVICES = ("bandA", "bandB", "bandC", "bandD", "bandE", "trackerA", "trackerB")

# Chipset -> (intra-burst gap tick, meta echo rate): devices on the same
# chipset share link-layer timing behavior even when their sizes differ.
CHIPSET_BEHAVIOR = {
    "BCX40": (0.012, 0.20),
    "QCA75": (0.030, 0.12),
    "DLG620": (0.075, 0.06),
    "CYW20": (0.180, 0.25),
    "NRF52": (0.050, 0.03),
}

DEVICE_CHIPSETS = {
    "watchA": "BCX40",
    "watchB": "BCX40",
    "watchC": "QCA75",
    "watchD": "QCA75",
    "watchE": "DLG620",
    "budsA": "DLG620",
    "budsB": "CYW20",
    "bandA": "NRF52",
    "bandB": "NRF52",
    "bandC": "DLG620",
    "bandD": "DLG620",
    "bandE": "BCX40",
    "trackerA": "QCA75",
    "trackerB": "CYW20",
}

HIGH_VOLUME_APPS = (
    "news_daily", "news_world", "maps_city", "maps_transit", "music_stream",
    "music_radio", "fit_run", "fit_gym", "fit_breathe", "chat_fast",
    "chat_secure", "mail_client", "notes_keep", "recipes_hub", "weather_now",
    "bank_mobile", "pay_wallet", "shop_list", "store_apps", "translate_go",
    "meditate_calm", "sleep_track", "smoke_log", "med_remind", "heart_check",
    "photo_cast", "cam_remote", "game_quiz", "radio_live", "podcast_go",
    "travel_air", "travel_guide", "social_feed", "tasks_todo", "timer_pro",
    "alarm_plus", "docs_read", "sport_live",
)

LOW_VOLUME_APPS = (
    "battery_w", "flashlight", "reminders", "daily_log", "casts_lite",
    "pay_lite", "heart_lite", "workout_lite", "prayer_lite", "alarm_lite",
    "phone_remote", "music_ctl", "recipes_lite", "sleep_lite", "med_lite",
    "zen_lite", "notes_lite", "radio_lite",
)

MEDLOG_ACTIONS = ("add_insulin", "add_carbs", "add_glucose", "add_fat", "add_protein", "add_calorie")

WIDE_COMBOS = (
    ("watchA", "fit_run", "workout_start"),
    ("watchA", "fit_run", "workout_stop"),
    ("watchA", "chat_fast", "msg_send"),
    ("watchA", "chat_fast", "msg_read"),
    ("watchB", "maps_city", "navigate"),
    ("watchB", "maps_city", "search"),
    ("watchB", "music_stream", "play"),
    ("watchB", "music_stream", "skip"),
    ("watchC", "mail_client", "fetch"),
    ("watchC", "mail_client", "send"),
    ("watchC", "weather_now", "refresh"),
    ("watchC", "news_daily", "read"),
    ("budsA", "music_stream", "play"),
    ("budsA", "music_stream", "pause"),
    ("budsA", "assistant", "query"),
    ("budsA", "assistant", "reply"),
    ("budsB", "podcast_go", "play"),
    ("budsB", "podcast_go", "skip"),
    ("budsB", "call_audio", "start"),
    ("budsB", "call_audio", "end"),
)

STREAM_ACTIONS = (
    ("open_maps", "maps_city"),
    ("log_meal", "recipes_hub"),
    ("start_workout", "fit_run"),
    ("read_news", "news_daily"),
    ("play_music", "music_stream"),
    ("search_place", "maps_city"),
    ("check_weather", "weather_now"),
    ("send_message", "chat_fast"),
    ("browse_store", "store_apps"),
    ("sync_notes", "notes_keep"),
)

BACKGROUND_PROFILE = "idle_background"


def _device_profile(name: str, k: int, flavor: Flavor) -> Profile:
    tick, meta_rate = CHIPSET_BEHAVIOR[DEVICE_CHIPSETS[name]]
    if flavor is Flavor.CLASSIC:
        a1, a2 = 30 + 27 * k, 250 + 40 * k
        m2s = SizeMixture(atoms=((a1, 0.60), (a2, 0.25)), noise_lo=10, noise_hi=200, noise_weight=0.15)
        s2m = SizeMixture(atoms=((a1 + 5, 0.60), (a2 + 9, 0.25)), noise_lo=10, noise_hi=200, noise_weight=0.15)
        bursts = CountDist("poisson", 3 + k)
        ppb = CountDist("uniform", 4, 9)
        inter = 1.2 + 0.5 * k
        split = 0.30 + 0.06 * k
    else:
        a1 = 20 + 30 * k
        m2s = SizeMixture(atoms=((a1, 0.6), (a1 + 3, 0.3)), noise_lo=8, noise_hi=60, noise_weight=0.1)
        s2m = SizeMixture(atoms=((a1 + 1, 0.6), (a1 + 5, 0.3)), noise_lo=8, noise_hi=60, noise_weight=0.1)
        bursts = CountDist("poisson", 2 + k)
        ppb = CountDist("uniform", 3, 8)
        inter = 2.0 + 0.3 * k
        split = 0.40 + 0.04 * k
    return Profile(
        name=name,
        flavor=flavor,
        m2s_sizes=m2s,
        s2m_sizes=s2m,
        bursts_per_block=bursts,
        packets_per_burst=ppb,
        intra_gap_s=tick * (1.0 + 0.1 * (k % 2)),
        inter_gap_s=inter,
        direction_split=split,
        meta_rate=meta_rate,
        labels={"device": name},
    )


def _high_volume_profile(name: str, k: int) -> Profile:
    size_i, timing_j = k % 7, k // 7
    atom = 80 + 90 * size_i
    return Profile(
        name=name,
        flavor=Flavor.CLASSIC,
        m2s_sizes=SizeMixture(atoms=((atom, 0.75),), noise_lo=50, noise_hi=900, noise_weight=0.25),
        s2m_sizes=SizeMixture(atoms=((atom + 13, 0.75),), noise_lo=50, noise_hi=900, noise_weight=0.25),
        bursts_per_block=CountDist("constant", 1),
        packets_per_burst=CountDist("uniform", 14, 24),
        intra_gap_s=0.004 * 3.0**timing_j,
        inter_gap_s=1.5,
        direction_split=0.45,
        meta_rate=0.0,
        labels={"device": "watchA", "app": name},
    )


def _low_volume_profile(name: str, k: int) -> Profile:
    return Profile(
        name=name,
        flavor=Flavor.CLASSIC,
        m2s_sizes=SizeMixture(noise_lo=16, noise_hi=44, noise_weight=1.0),
        s2m_sizes=SizeMixture(noise_lo=16, noise_hi=44, noise_weight=1.0),
        bursts_per_block=CountDist("poisson", 1),
        packets_per_burst=CountDist("uniform", 1, 3),
        intra_gap_s=0.05 * (1.0 + 0.02 * k),
        inter_gap_s=2.5,
        direction_split=0.5,
        meta_rate=0.05,
        labels={"device": "watchA", "app": name},
    )


def _medlog_profile(action: str, a: int) -> Profile:
    return Profile(
        name=f"medlog_{action}",
        flavor=Flavor.CLASSIC,
        m2s_sizes=SizeMixture(atoms=((210, 0.55), (300 + 9 * a, 0.20)), noise_lo=50, noise_hi=400, noise_weight=0.25),
        s2m_sizes=SizeMixture(atoms=((218, 0.55), (304 + 9 * a, 0.20)), noise_lo=50, noise_hi=400, noise_weight=0.25),
        bursts_per_block=CountDist("constant", 2),
        packets_per_burst=CountDist("uniform", 5, 9),
        intra_gap_s=0.012,
        inter_gap_s=0.7 + 0.22 * a,
        direction_split=0.45,
        meta_rate=0.10,
        labels={"device": "watchA", "app": "medlog", "action": action},
    )


def _wide_profile(device: str, app: str, action: str, w: int) -> Profile:
    atom = 70 + 47 * w
    return Profile(
        name=f"wide_{device}_{app}_{action}",
        flavor=Flavor.CLASSIC,
        m2s_sizes=SizeMixture(atoms=((atom, 0.65),), noise_lo=40, noise_hi=1000, noise_weight=0.2),
        s2m_sizes=SizeMixture(atoms=((atom + 11, 0.65),), noise_lo=40, noise_hi=1000, noise_weight=0.2),
        bursts_per_block=CountDist("poisson", 3),
        packets_per_burst=CountDist("uniform", 4, 10),
        intra_gap_s=0.005 * 1.6 ** (w % 5),
        inter_gap_s=1.3,
        direction_split=0.42,
        meta_rate=0.12,
        labels={"device": device, "app": app, "action": action},
    )


def _stream_profile(action: str, app: str, j: int) -> Profile:
    atom = 120 + 70 * j
    return Profile(
        name=f"act_{action}",
        flavor=Flavor.CLASSIC,
        m2s_sizes=SizeMixture(atoms=((atom, 0.7),), noise_lo=48, noise_hi=820, noise_weight=0.15),
        s2m_sizes=SizeMixture(atoms=((atom + 17, 0.7),), noise_lo=48, noise_hi=820, noise_weight=0.15),
        bursts_per_block=CountDist("constant", 4),
        packets_per_burst=CountDist("uniform", 8, 14),
        intra_gap_s=0.005 * 1.6 ** (j % 5),
        inter_gap_s=0.8,
        direction_split=0.45,
        meta_rate=0.10,
        labels={"device": "watchA", "app": app, "action": action},
    )


def _background_profile() -> Profile:
    return Profile(
        name=BACKGROUND_PROFILE,
        flavor=Flavor.CLASSIC,
        m2s_sizes=SizeMixture(noise_lo=12, noise_hi=40, noise_weight=1.0),
        s2m_sizes=SizeMixture(noise_lo=12, noise_hi=40, noise_weight=1.0),
        bursts_per_block=CountDist("poisson", 2),
        packets_per_burst=CountDist("uniform", 1, 2),
        intra_gap_s=0.05,
        inter_gap_s=4.0,
        direction_split=0.5,
        meta_rate=0.05,
        labels={"device": "watchA", "action": "NoAction"},
    )


def default_day_plan() -> DayPlan:
    # Two-level day/night schedule: daytime hours see 8x the triggers.
    weights = tuple(16.0 if 8 <= h <= 21 else 2.0 for h in range(24))
    catalog = tuple(
        ActionSpec(action=action, profile=f"act_{action}", popular=i < 5, duration_s=20.0)
        for i, (action, _) in enumerate(STREAM_ACTIONS)
    )
    return DayPlan(hourly_weights=weights, catalog=catalog, background=BACKGROUND_PROFILE)


def default_pack() -> ProfilePack:
    profiles: dict[str, Profile] = {}

    def add(p: Profile) -> str:
        if p.name in profiles:
            raise ValueError(f"duplicate profile {p.name!r}")
        profiles[p.name] = p
        return p.name

    groups: dict[str, tuple[str, ...]] = {}
    groups["device_classic"] = tuple(
        add(_device_profile(n, k, Flavor.CLASSIC)) for k, n in enumerate(CLASSIC_DEVICES)
    )
    groups["device_le"] = tuple(add(_device_profile(n, k, Flavor.LOW_ENERGY)) for k, n in enumerate(LE_DEVICES))
    groups["app_high"] = tuple(add(_high_volume_profile(n, k)) for k, n in enumerate(HIGH_VOLUME_APPS))
    groups["app_low"] = tuple(add(_low_volume_profile(n, k)) for k, n in enumerate(LOW_VOLUME_APPS))
    groups["medlog"] = tuple(add(_medlog_profile(a, i)) for i, a in enumerate(MEDLOG_ACTIONS))
    groups["wide"] = tuple(add(_wide_profile(d, app, act, w)) for w, (d, app, act) in enumerate(WIDE_COMBOS))
    groups["stream"] = tuple(add(_stream_profile(act, app, j)) for j, (act, app) in enumerate(STREAM_ACTIONS))
    groups["background"] = (add(_background_profile()),)

    return ProfilePack(
        name="default",
        profiles=profiles,
        groups=groups,
        chipsets=dict(DEVICE_CHIPSETS),
        day_plan=default_day_plan(),
    )
