import dataclasses
import logging

import numpy as np
import numpy.testing as npt
import pytest

from dynident.chain import (
    KinematicChain,
    UrdfError,
    chain_from_json,
    chain_to_json,
    link_frames,
    batch_link_frames,
    parse_urdf,
)

SINGLE = """
<robot name="one">
  <link name="base"/>
  <joint name="j1" type="revolute">
    <parent link="base"/><child link="l1"/>
    <axis xyz="0 0 1"/>
    <limit lower="-3.0" upper="3.0" velocity="2.0"/>
  </joint>
  <link name="l1">
    <inertial>
      <origin xyz="0.5 0 0"/>
      <mass value="1.0"/>
      <inertia ixx="0.01" iyy="0.11" izz="0.11"/>
    </inertial>
  </link>
</robot>
"""


def _rot_fixed_rot(t1, tf, t2):
    """revolute(origin t1) -> fixed(origin tf) -> revolute(origin t2)."""
    def origin(t):
        return f'<origin xyz="{t[0]} {t[1]} {t[2]}" rpy="{t[3]} {t[4]} {t[5]}"/>'
    return f"""
<robot name="rfr">
  <link name="base"/>
  <joint name="j1" type="revolute">
    {origin(t1)}<parent link="base"/><child link="l1"/>
    <axis xyz="0 0 1"/><limit lower="-3" upper="3" velocity="2"/>
  </joint>
  <link name="l1"><inertial><mass value="1"/>
    <inertia ixx="0.02" iyy="0.02" izz="0.02"/></inertial></link>
  <joint name="jf" type="fixed">
    {origin(tf)}<parent link="l1"/><child link="lf"/>
  </joint>
  <link name="lf"/>
  <joint name="j2" type="revolute">
    {origin(t2)}<parent link="lf"/><child link="l2"/>
    <axis xyz="0 1 0"/><limit lower="-2" upper="2" velocity="2"/>
  </joint>
  <link name="l2"><inertial><origin xyz="0.1 0 0"/><mass value="0.5"/>
    <inertia ixx="0.01" iyy="0.01" izz="0.01"/></inertial></link>
</robot>
"""


def _np_transform(xyz, rpy):
    cr, sr = np.cos(rpy[0]), np.sin(rpy[0])
    cp, sp = np.cos(rpy[1]), np.sin(rpy[1])
    cy, sy = np.cos(rpy[2]), np.sin(rpy[2])
    rx = np.array([[1, 0, 0], [0, cr, -sr], [0, sr, cr]])
    ry = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]])
    rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1]])
    t = np.eye(4)
    t[:3, :3] = rz @ ry @ rx
    t[:3, 3] = xyz
    return t


def _np_rot(axis, q):
    axis = np.asarray(axis, float)
    k = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]],
                  [-axis[1], axis[0], 0]])
    t = np.eye(4)
    t[:3, :3] = np.eye(3) + np.sin(q) * k + (1 - np.cos(q)) * (k @ k)
    return t


def test_single_link_echo():
    chain = parse_urdf(SINGLE)
    assert chain.dof == 1
    assert chain.joint_names == ["j1"]
    link = chain.links[0]
    assert link.mass == 1.0
    npt.assert_allclose(link.com, [0.5, 0, 0])
    npt.assert_allclose(chain.joints[0].axis, [0, 0, 1])


def test_fixed_joint_folded_into_origin():
    t1 = (0.1, 0.0, 0.3, 0.0, 0.0, 0.0)
    tf = (0.05, -0.02, 0.1, 0.3, 0.0, 0.0)
    t2 = (0.2, 0.0, 0.0, 0.0, 0.2, 0.0)
    chain = parse_urdf(_rot_fixed_rot(t1, tf, t2))
    assert chain.dof == 2

    # independent composition of the frame chain
    q1, q2 = 0.4, -0.9
    expect1 = _np_transform(t1[:3], t1[3:]) @ _np_rot([0, 0, 1], q1)
    expect2 = (expect1 @ _np_transform(tf[:3], tf[3:])
               @ _np_transform(t2[:3], t2[3:]) @ _np_rot([0, 1, 0], q2))
    frames = link_frames(chain, [q1, q2])
    npt.assert_allclose(frames[0], expect1, atol=1e-12)
    npt.assert_allclose(frames[1], expect2, atol=1e-12)


def test_trailing_fixed_link_merged(arm7):
    # arm7.urdf attaches a 0.55 kg tool via a fixed flange joint
    assert arm7.dof == 7
    assert arm7.links[-1].name == "link7"
    npt.assert_allclose(arm7.links[-1].mass, 0.40 + 0.55)


def test_fixed_merge_matches_origin_referenced_composition():
    """Composite inertia equals the sum of origin-referenced tensors."""
    xml = """
<robot name="m">
  <link name="base"/>
  <joint name="j1" type="revolute">
    <parent link="base"/><child link="l1"/>
    <axis xyz="0 0 1"/><limit lower="-3" upper="3" velocity="2"/>
  </joint>
  <link name="l1"><inertial><origin xyz="0.2 0.05 -0.1"/><mass value="2.0"/>
    <inertia ixx="0.03" ixy="0.001" iyy="0.04" izz="0.05"/></inertial></link>
  <joint name="jf" type="fixed">
    <origin xyz="0.3 0 0.1" rpy="0 0.5 0"/><parent link="l1"/><child link="l2"/>
  </joint>
  <link name="l2"><inertial><origin xyz="0.05 0.02 0"/><mass value="0.7"/>
    <inertia ixx="0.004" iyy="0.005" izz="0.006"/></inertial></link>
</robot>
"""
    chain = parse_urdf(xml)
    link = chain.links[0]

    def origin_tensor(m, c, i_com):
        return i_com + m * (np.dot(c, c) * np.eye(3) - np.outer(c, c))

    t = _np_transform([0.3, 0, 0.1], [0, 0.5, 0])
    r, p = t[:3, :3], t[:3, 3]
    m1, c1 = 2.0, np.array([0.2, 0.05, -0.1])
    i1 = np.array([[0.03, 0.001, 0], [0.001, 0.04, 0], [0, 0, 0.05]])
    m2 = 0.7
    c2 = r @ np.array([0.05, 0.02, 0.0]) + p
    i2 = r @ np.diag([0.004, 0.005, 0.006]) @ r.T

    m_tot = m1 + m2
    c_tot = (m1 * c1 + m2 * c2) / m_tot
    npt.assert_allclose(link.mass, m_tot)
    npt.assert_allclose(link.com, c_tot, atol=1e-12)
    # sum origin-referenced tensors, then shift back to the composite com
    i_orig = origin_tensor(m1, c1, i1) + origin_tensor(m2, c2, i2)
    i_back = i_orig - m_tot * (np.dot(c_tot, c_tot) * np.eye(3)
                               - np.outer(c_tot, c_tot))
    npt.assert_allclose(link.inertia, i_back, atol=1e-12)


def test_branched_chain_rejected():
    xml = """
<robot name="b">
  <link name="base"/><link name="a"/><link name="c"/>
  <joint name="j1" type="revolute"><parent link="base"/><child link="a"/>
    <axis xyz="0 0 1"/><limit lower="-1" upper="1" velocity="1"/></joint>
  <joint name="j2" type="revolute"><parent link="base"/><child link="c"/>
    <axis xyz="0 0 1"/><limit lower="-1" upper="1" velocity="1"/></joint>
</robot>
"""
    with pytest.raises(UrdfError, match="branched"):
        parse_urdf(xml)


@pytest.mark.parametrize("xml, match", [
    ("<robot name='x'><link name='a'/></robot>", "links and joints"),
    ("not xml at all <<", "malformed XML"),
    ("""<robot name='x'><link name='a'/><link name='b'/>
        <joint name='j' type='prismatic'><parent link='a'/><child link='b'/>
        </joint></robot>""", "unsupported joint type"),
    ("""<robot name='x'><link name='a'/>
        <link name='b'><inertial><mass value='1'/>
        <inertia ixx='0.1' iyy='0.1' izz='0.1'/></inertial></link>
        <joint name='j' type='revolute'><parent link='a'/><child link='b'/>
        <axis xyz='0 0 1'/></joint></robot>""", "limits required"),
])
def test_rejections(xml, match):
    with pytest.raises(UrdfError, match=match):
        parse_urdf(xml)


def test_moving_link_needs_inertial():
    xml = SINGLE.replace("<inertial>", "<ignored_x>").replace("</inertial>", "</ignored_x>")
    with pytest.raises(UrdfError, match="no inertial"):
        parse_urdf(xml)


def test_axis_normalized():
    chain = parse_urdf(SINGLE.replace('xyz="0 0 1"', 'xyz="0 0 2"'))
    npt.assert_allclose(chain.joints[0].axis, [0, 0, 1])


def test_velocity_default_logged(caplog):
    xml = SINGLE.replace(' velocity="2.0"', "")
    with caplog.at_level(logging.WARNING, logger="dynident.chain"):
        chain = parse_urdf(xml)
    assert chain.joints[0].dq_max == 1.0
    assert any("velocity limit" in r.message for r in caplog.records)


def test_ignored_tags_logged(caplog):
    xml = SINGLE.replace("</robot>", "<gazebo/></robot>")
    with caplog.at_level(logging.WARNING, logger="dynident.chain"):
        parse_urdf(xml)
    assert any("ignoring URDF tags" in r.message for r in caplog.records)


def test_inertial_origin_rotation():
    # rpy of the inertial origin must rotate the tensor into link axes
    xml = SINGLE.replace('<origin xyz="0.5 0 0"/>',
                         '<origin xyz="0.5 0 0" rpy="0 0 1.5707963267948966"/>')
    chain = parse_urdf(xml)
    # Rz(pi/2) swaps the xx and yy moments
    npt.assert_allclose(np.diag(chain.links[0].inertia), [0.11, 0.01, 0.11],
                        atol=1e-12)


def test_limits_arrays(planar2):
    q_min, q_max, dq_min, dq_max = planar2.limits()
    npt.assert_allclose(q_min, [-2.9, -2.2])
    npt.assert_allclose(q_max, [2.9, 2.2])
    npt.assert_allclose(dq_min, [-2.0, -2.5])
    npt.assert_allclose(dq_max, [2.0, 2.5])


def test_batch_fk_matches_single(arm7, rng):
    q = rng.uniform(-1.5, 1.5, size=(6, arm7.dof))
    rot, pos = batch_link_frames(arm7, q)
    for b in range(q.shape[0]):
        frames = link_frames(arm7, q[b])
        for i, t in enumerate(frames):
            npt.assert_allclose(rot[b, i], t[:3, :3], atol=1e-12)
            npt.assert_allclose(pos[b, i], t[:3, 3], atol=1e-12)


def test_json_round_trip(arm7, rng):
    clone = chain_from_json(chain_to_json(arm7))
    assert clone.dof == arm7.dof
    q = rng.uniform(-1, 1, size=arm7.dof)
    for a, b in zip(link_frames(arm7, q), link_frames(clone, q)):
        npt.assert_array_equal(a, b)
    for la, lb in zip(arm7.links, clone.links):
        npt.assert_array_equal(la.inertia, lb.inertia)


def test_chain_immutable(planar2):
    with pytest.raises(dataclasses.FrozenInstanceError):
        planar2.joints = ()


def test_empty_chain_rejected():
    with pytest.raises(UrdfError):
        KinematicChain(joints=(), links=())
