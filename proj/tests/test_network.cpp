#include "dspack/network.hpp"

#include <gtest/gtest.h>

using namespace dspack;

namespace {

LayerSpec layer(std::string name, OpKind kind, std::int64_t c_in, std::int64_t c_out, int k, std::int64_t hw,
                std::int64_t groups = 1) {
  LayerSpec l;
  l.name = std::move(name);
  l.op_kind = kind;
  l.c_in = c_in;
  l.c_out = c_out;
  l.k_h = l.k_w = k;
  l.h_out = l.w_out = hw;
  l.groups = groups;
  l.check();
  return l;
}

// A hand-made table with T_mul = `lanes` in every cell. The configs are not
// validated against a profile; only their throughput matters here.
LookupTable uniform_table(KernelShape shape, int lanes) {
  LookupTable t;
  t.kernel_shape = shape;
  for (int w = 2; w <= 8; ++w)
    for (int a = 2; a <= 8; ++a) {
      KernelPackingConfig c;
      c.d_b = w;
      c.e_b = a;
      c.n_d = lanes;
      t.entries.emplace(std::pair{w, a}, make_choice(c));
    }
  return t;
}

}  // namespace

TEST(OpMul, Examples) {
  EXPECT_EQ(op_mul(layer("a", OpKind::conv, 1, 1, 1, 1)), 1);
  EXPECT_EQ(op_mul(layer("b", OpKind::conv, 16, 32, 3, 20)), 1843200);
  EXPECT_EQ(op_mul(layer("c", OpKind::depthwise_conv, 32, 32, 3, 10, 32)), 28800);
  EXPECT_EQ(op_mul(layer("d", OpKind::fully_connected, 512, 10, 1, 1)), 5120);
}

TEST(LayerSpec, Checks) {
  EXPECT_THROW(layer("x", OpKind::conv, 0, 1, 1, 1), SchemaError);
  EXPECT_THROW(layer("x", OpKind::conv, 6, 4, 1, 1, 4), SchemaError);
  EXPECT_THROW(layer("x", OpKind::depthwise_conv, 8, 8, 3, 4, 1), SchemaError);
  EXPECT_THROW(layer("x", OpKind::pointwise_conv, 8, 8, 3, 4), SchemaError);
  EXPECT_EQ(layer("fc", OpKind::fully_connected, 8, 2, 1, 1).kernel_shape(), (KernelShape{1, 1}));
}

TEST(OpDsp, IdentityThroughputSumsOpMul) {
  const NetworkSpec net{layer("a", OpKind::conv, 3, 8, 3, 16), layer("b", OpKind::pointwise_conv, 8, 16, 1, 16),
                        layer("c", OpKind::fully_connected, 100, 10, 1, 1)};
  TableSet tables;
  tables.add(uniform_table({3, 3}, 1));
  tables.add(uniform_table({1, 1}, 1));
  BitwidthAssignment bits{{"a", {4, 4}}, {"b", {2, 8}}, {"c", {8, 8}}};
  EXPECT_EQ(op_dsp(net, bits, tables), Rational(op_mul(net[0]) + op_mul(net[1]) + op_mul(net[2])));
}

TEST(OpDsp, WorkedExamples) {
  // Op_mul 12 at T_mul 12 costs one DSP operation.
  const NetworkSpec one{layer("x", OpKind::fully_connected, 4, 3, 1, 1)};
  TableSet t12;
  t12.add(uniform_table({1, 1}, 12));
  EXPECT_EQ(op_dsp(one, {{"x", {4, 4}}}, t12), Rational(1));

  // 100 multiplications at T_mul 4 plus 60 at T_mul 6: 25 + 10 = 35.
  const NetworkSpec two{layer("p", OpKind::fully_connected, 10, 10, 1, 1),
                        layer("q", OpKind::fully_connected, 6, 10, 1, 1)};
  LookupTable mixed = uniform_table({1, 1}, 4);
  KernelPackingConfig six;
  six.d_b = 2;
  six.e_b = 2;
  six.n_d = 6;
  mixed.entries.at({2, 2}) = make_choice(six);
  TableSet tables;
  tables.add(mixed);
  EXPECT_EQ(op_dsp(two, {{"p", {4, 4}}, {"q", {2, 2}}}, tables), Rational(35));
}

TEST(OpDsp, Errors) {
  const NetworkSpec net{layer("a", OpKind::conv, 3, 8, 3, 16)};
  TableSet tables;
  tables.add(uniform_table({1, 1}, 1));
  EXPECT_THROW(op_dsp(net, {{"a", {4, 4}}}, tables), DomainError);  // no 3x3 table
  tables.add(uniform_table({3, 3}, 1));
  EXPECT_THROW(op_dsp(net, {{"a", {4, 4}}, {"zz", {4, 4}}}, tables), SchemaError);
  EXPECT_THROW(op_dsp(net, {}, tables), SchemaError);
  EXPECT_THROW(op_dsp(net, {{"a", {9, 4}}}, tables), DomainError);
  EXPECT_THROW(tables.add(uniform_table({3, 3}, 2)), SchemaError);
}

TEST(OpDsp, FrozenLayersKeepTheirWidths) {
  auto l = layer("first", OpKind::conv, 3, 8, 3, 4);
  l.frozen_bits = BitPair{8, 8};
  TableSet tables;
  tables.add(uniform_table({3, 3}, 1));
  EXPECT_EQ(op_dsp({l}, {}, tables), Rational(op_mul(l)));
  EXPECT_NO_THROW(op_dsp({l}, {{"first", {8, 8}}}, tables));
  EXPECT_THROW(op_dsp({l}, {{"first", {4, 4}}}, tables), SchemaError);
}

TEST(NetworkJson, RoundTripAndSchema) {
  const json j = json::parse(R"({
    "version": 1,
    "layers": [
      {"name": "c1", "op_kind": "conv", "c_in": 3, "c_out": 16, "k_h": 3, "k_w": 3, "h_out": 8, "w_out": 8},
      {"name": "dw", "op_kind": "depthwise_conv", "c_in": 16, "c_out": 16, "k_h": 3, "k_w": 3, "h_out": 8, "w_out": 8},
      {"name": "fc", "op_kind": "fully_connected", "c_in": 1024, "c_out": 10, "frozen_bits": {"w_b": 8, "a_b": 8}}
    ]})");
  const auto net = network_from_json(j);
  ASSERT_EQ(net.size(), 3u);
  EXPECT_EQ(net[1].groups, 16);
  EXPECT_EQ(network_from_json(to_json(net)).size(), 3u);
  EXPECT_EQ(to_json(network_from_json(to_json(net))), to_json(net));

  auto bad = j;
  bad["layers"][0]["op_kind"] = "pool";
  EXPECT_THROW(network_from_json(bad), SchemaError);
  bad = j;
  bad["layers"][1]["name"] = "c1";
  EXPECT_THROW(network_from_json(bad), SchemaError);
  bad = j;
  bad["layers"][0].erase("c_in");
  EXPECT_THROW(network_from_json(bad), SchemaError);
  EXPECT_THROW(network_from_json(json{{"version", 1}, {"layers", json::array()}}), SchemaError);
}

TEST(AssignmentJson, RoundTrip) {
  const auto a = assignment_from_json(json::parse(R"({"c1": {"w_b": 4, "a_b": 5}})"));
  EXPECT_EQ(a.at("c1"), (BitPair{4, 5}));
  EXPECT_EQ(assignment_from_json(to_json(a)), a);
  EXPECT_THROW(assignment_from_json(json::parse(R"({"c1": {"w_b": 4}})")), SchemaError);
  EXPECT_THROW(assignment_from_json(json::array()), SchemaError);
}
