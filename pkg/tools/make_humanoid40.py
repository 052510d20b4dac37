"""Regenerate src/mocaptrack/models/humanoid40.yaml.

A human-sized stand-in body (mm, rad): 40 revolute joints, 50 markers.
z points up, x forward, y to the subject's left. Zero pose is an upright
stance with arms hanging.

    python tools/make_humanoid40.py
"""

from pathlib import Path

import yaml

X, Y, Z = [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]
AXES = {"x": X, "y": Y, "z": Z}

joints = []
markers = []


def joint(name, parent, xyz, axis, lower, upper):
    joints.append({
        "name": name,
        "parent": parent,
        "origin": {"xyz": [float(v) for v in xyz], "rpy": [0.0, 0.0, 0.0]},
        "axis": list(AXES[axis]),
        "limits": {"lower": lower, "upper": upper},
    })


def marker(label, segment, offset):
    markers.append({"label": label, "segment": segment, "offset": [float(v) for v in offset]})


# torso: lower (3), upper (3)
joint("lower_torso_x", "pelvis", (0, 0, 100), "x", -0.5, 0.5)
joint("lower_torso_y", "lower_torso_x", (0, 0, 0), "y", -0.4, 0.8)
joint("lower_torso_z", "lower_torso_y", (0, 0, 0), "z", -0.6, 0.6)
joint("upper_torso_x", "lower_torso_z", (0, 0, 200), "x", -0.4, 0.4)
joint("upper_torso_y", "upper_torso_x", (0, 0, 0), "y", -0.3, 0.6)
joint("upper_torso_z", "upper_torso_y", (0, 0, 0), "z", -0.5, 0.5)
# neck (3) and head nod (1)
joint("neck_x", "upper_torso_z", (0, 0, 250), "x", -0.6, 0.6)
joint("neck_y", "neck_x", (0, 0, 0), "y", -0.6, 0.8)
joint("neck_z", "neck_y", (0, 0, 0), "z", -1.0, 1.0)
joint("head_y", "neck_z", (0, 0, 100), "y", -0.4, 0.4)

for side, s in (("l", 1.0), ("r", -1.0)):
    # clavicle (2), shoulder (3), elbow (1), wrist (2)
    joint(f"{side}_clavicle_x", "upper_torso_z", (0, 30 * s, 220), "x", *sorted((-0.2 * s, 0.3 * s)))
    joint(f"{side}_clavicle_z", f"{side}_clavicle_x", (0, 0, 0), "z", -0.3, 0.3)
    joint(f"{side}_shoulder_x", f"{side}_clavicle_z", (0, 160 * s, 0), "x", *sorted((-0.3 * s, 2.0 * s)))
    joint(f"{side}_shoulder_y", f"{side}_shoulder_x", (0, 0, 0), "y", -2.5, 1.0)
    joint(f"{side}_shoulder_z", f"{side}_shoulder_y", (0, 0, 0), "z", -1.2, 1.2)
    joint(f"{side}_elbow_y", f"{side}_shoulder_z", (0, 0, -300), "y", -2.4, 0.0)
    joint(f"{side}_wrist_x", f"{side}_elbow_y", (0, 0, -260), "x", -0.5, 0.5)
    joint(f"{side}_wrist_y", f"{side}_wrist_x", (0, 0, 0), "y", -1.0, 1.0)
for side, s in (("l", 1.0), ("r", -1.0)):
    # hip (3), knee (1), ankle (2), toe (1)
    joint(f"{side}_hip_x", "pelvis", (0, 90 * s, -50), "x", *sorted((-0.3 * s, 0.8 * s)))
    joint(f"{side}_hip_y", f"{side}_hip_x", (0, 0, 0), "y", -2.0, 0.5)
    joint(f"{side}_hip_z", f"{side}_hip_y", (0, 0, 0), "z", -0.8, 0.8)
    joint(f"{side}_knee_y", f"{side}_hip_z", (0, 0, -420), "y", 0.0, 2.3)
    joint(f"{side}_ankle_x", f"{side}_knee_y", (0, 0, -400), "x", -0.4, 0.4)
    joint(f"{side}_ankle_y", f"{side}_ankle_x", (0, 0, 0), "y", -0.8, 0.6)
    joint(f"{side}_toe_y", f"{side}_ankle_y", (150, 0, -60), "y", -0.5, 0.8)

# pelvis (4)
marker("LASI", "pelvis", (70, 110, 30))
marker("RASI", "pelvis", (70, -110, 30))
marker("LPSI", "pelvis", (-80, 50, 40))
marker("RPSI", "pelvis", (-80, -50, 40))
# torso (7)
marker("L3", "lower_torso_z", (-100, 0, 50))
marker("BELLY", "lower_torso_z", (90, 10, 60))
marker("T10", "upper_torso_z", (-100, 0, 60))
marker("STRN", "upper_torso_z", (100, 0, 100))
marker("CLAV", "upper_torso_z", (80, 0, 220))
marker("C7", "upper_torso_z", (-70, 0, 270))
marker("RBAK", "upper_torso_z", (-90, -60, 150))
# head (5)
marker("LFHD", "head_y", (80, 60, 80))
marker("RFHD", "head_y", (80, -60, 80))
marker("LBHD", "head_y", (-80, 60, 90))
marker("RBHD", "head_y", (-80, -60, 90))
marker("HEAD", "head_y", (0, 0, 150))
for side, s in (("L", 1.0), ("R", -1.0)):
    p = side.lower()
    # arm (10)
    marker(f"{side}SHO", f"{p}_clavicle_z", (0, 150 * s, 20))
    marker(f"{side}UPA", f"{p}_shoulder_z", (0, 50 * s, -150))
    marker(f"{side}UPF", f"{p}_shoulder_z", (40, 0, -200))
    marker(f"{side}ELB", f"{p}_shoulder_z", (0, 40 * s, -300))
    marker(f"{side}FRA", f"{p}_elbow_y", (0, 35 * s, -130))
    marker(f"{side}FRF", f"{p}_elbow_y", (30, 0, -200))
    marker(f"{side}WRA", f"{p}_elbow_y", (20, 25 * s, -250))
    marker(f"{side}WRB", f"{p}_elbow_y", (-20, -25 * s, -250))
    marker(f"{side}HND", f"{p}_wrist_y", (0, 30 * s, -80))
    marker(f"{side}FIN", f"{p}_wrist_y", (30, 0, -100))
for side, s in (("L", 1.0), ("R", -1.0)):
    p = side.lower()
    # leg (7)
    marker(f"{side}THI", f"{p}_hip_z", (0, 80 * s, -200))
    marker(f"{side}THF", f"{p}_hip_z", (60, 0, -250))
    marker(f"{side}KNE", f"{p}_hip_z", (0, 50 * s, -420))
    marker(f"{side}TIB", f"{p}_knee_y", (50, 10 * s, -180))
    marker(f"{side}ANK", f"{p}_knee_y", (0, 40 * s, -400))
    marker(f"{side}HEE", f"{p}_ankle_y", (-50, 0, -60))
    marker(f"{side}TOE", f"{p}_toe_y", (40, 0, -10))

assert len(joints) == 40, len(joints)
assert len(markers) == 50, len(markers)

doc = {"name": "humanoid40", "root": "pelvis", "joints": joints, "markers": markers}
out = Path(__file__).resolve().parents[1] / "src" / "mocaptrack" / "models" / "humanoid40.yaml"
header = ("# Stand-in human body: 40 revolute joints, 50 markers (mm, rad).\n"
          "# Generated by tools/make_humanoid40.py; edit that script instead.\n")
out.write_text(header + yaml.safe_dump(doc, sort_keys=False, default_flow_style=None))
print(f"wrote {out}")
