// Force-directed subgraph viewer: drag nodes, drag background to pan, wheel to zoom.
(function () {
  "use strict";
  var canvas = document.getElementById("graph");
  var ctx = canvas.getContext("2d");
  var HIGHLIGHT = "#e4572e";
  var NODE = "#4c78a8";
  var EDGE = "#999999";
  var RADIUS = 14;

  var nodes = GRAPH.nodes.map(function (n, i) {
    var angle = (2 * Math.PI * i) / Math.max(GRAPH.nodes.length, 1);
    return { id: n.id, label: n.label, highlighted: n.highlighted,
             x: 200 * Math.cos(angle), y: 200 * Math.sin(angle), vx: 0, vy: 0, fixed: false };
  });
  var index = {};
  nodes.forEach(function (n, i) { index[n.id] = i; });
  var edges = GRAPH.edges.map(function (e) {
    return { s: nodes[index[e.source]], t: nodes[index[e.target]], label: e.label };
  });

  var view = { x: 0, y: 0, k: 1 };
  var drag = null;
  var alpha = 1;

  function resize() {
    canvas.width = canvas.clientWidth * window.devicePixelRatio;
    canvas.height = canvas.clientHeight * window.devicePixelRatio;
    ctx.setTransform(window.devicePixelRatio, 0, 0, window.devicePixelRatio, 0, 0);
    if (view.x === 0 && view.y === 0) {
      view.x = canvas.clientWidth / 2;
      view.y = canvas.clientHeight / 2;
    }
  }

  function step() {
    var i, j, a, b, dx, dy, d2, d, f;
    for (i = 0; i < nodes.length; i++) {
      for (j = i + 1; j < nodes.length; j++) {
        a = nodes[i]; b = nodes[j];
        dx = b.x - a.x; dy = b.y - a.y;
        d2 = dx * dx + dy * dy + 0.01;
        f = 6000 / d2;
        d = Math.sqrt(d2);
        a.vx -= f * dx / d; a.vy -= f * dy / d;
        b.vx += f * dx / d; b.vy += f * dy / d;
      }
    }
    edges.forEach(function (e) {
      dx = e.t.x - e.s.x; dy = e.t.y - e.s.y;
      d = Math.sqrt(dx * dx + dy * dy) + 0.01;
      f = (d - 160) * 0.02;
      e.s.vx += f * dx / d; e.s.vy += f * dy / d;
      e.t.vx -= f * dx / d; e.t.vy -= f * dy / d;
    });
    nodes.forEach(function (n) {
      n.vx -= n.x * 0.002; n.vy -= n.y * 0.002;
      if (!n.fixed) {
        n.x += n.vx * alpha; n.y += n.vy * alpha;
      }
      n.vx *= 0.6; n.vy *= 0.6;
    });
    alpha = Math.max(alpha * 0.99, 0.02);
  }

  function arrow(x1, y1, x2, y2) {
    var dx = x2 - x1, dy = y2 - y1;
    var d = Math.sqrt(dx * dx + dy * dy) || 1;
    var ex = x2 - dx / d * RADIUS, ey = y2 - dy / d * RADIUS;
    ctx.beginPath();
    ctx.moveTo(x1, y1);
    ctx.lineTo(ex, ey);
    ctx.stroke();
    ctx.beginPath();
    ctx.moveTo(ex, ey);
    ctx.lineTo(ex - dx / d * 9 - dy / d * 4, ey - dy / d * 9 + dx / d * 4);
    ctx.lineTo(ex - dx / d * 9 + dy / d * 4, ey - dy / d * 9 - dx / d * 4);
    ctx.closePath();
    ctx.fill();
  }

  function draw() {
    ctx.clearRect(0, 0, canvas.clientWidth, canvas.clientHeight);
    ctx.save();
    ctx.translate(view.x, view.y);
    ctx.scale(view.k, view.k);
    ctx.strokeStyle = EDGE;
    ctx.fillStyle = EDGE;
    ctx.lineWidth = 1.5;
    ctx.font = "11px sans-serif";
    ctx.textAlign = "center";
    edges.forEach(function (e) {
      arrow(e.s.x, e.s.y, e.t.x, e.t.y);
      ctx.fillStyle = "#555555";
      ctx.fillText(e.label, (e.s.x + e.t.x) / 2, (e.s.y + e.t.y) / 2 - 4);
      ctx.fillStyle = EDGE;
    });
    nodes.forEach(function (n) {
      ctx.beginPath();
      ctx.arc(n.x, n.y, RADIUS, 0, 2 * Math.PI);
      ctx.fillStyle = n.highlighted ? HIGHLIGHT : NODE;
      ctx.fill();
      ctx.fillStyle = "#222222";
      ctx.font = (n.highlighted ? "bold " : "") + "13px sans-serif";
      ctx.fillText(n.label, n.x, n.y + RADIUS + 14);
    });
    ctx.restore();
  }

  function toWorld(ev) {
    var r = canvas.getBoundingClientRect();
    return { x: (ev.clientX - r.left - view.x) / view.k, y: (ev.clientY - r.top - view.y) / view.k };
  }

  function hit(p) {
    for (var i = nodes.length - 1; i >= 0; i--) {
      var dx = nodes[i].x - p.x, dy = nodes[i].y - p.y;
      if (dx * dx + dy * dy <= RADIUS * RADIUS) return nodes[i];
    }
    return null;
  }

  canvas.addEventListener("mousedown", function (ev) {
    var p = toWorld(ev);
    var n = hit(p);
    if (n) {
      n.fixed = true;
      drag = { node: n };
    } else {
      drag = { pan: true, x: ev.clientX - view.x, y: ev.clientY - view.y };
    }
    canvas.style.cursor = "grabbing";
  });
  window.addEventListener("mousemove", function (ev) {
    if (!drag) return;
    if (drag.node) {
      var p = toWorld(ev);
      drag.node.x = p.x; drag.node.y = p.y;
      alpha = Math.max(alpha, 0.3);
    } else {
      view.x = ev.clientX - drag.x; view.y = ev.clientY - drag.y;
    }
  });
  window.addEventListener("mouseup", function () {
    if (drag && drag.node) drag.node.fixed = false;
    drag = null;
    canvas.style.cursor = "grab";
  });
  canvas.addEventListener("wheel", function (ev) {
    ev.preventDefault();
    var r = canvas.getBoundingClientRect();
    var mx = ev.clientX - r.left, my = ev.clientY - r.top;
    var k = Math.min(Math.max(view.k * Math.exp(-ev.deltaY * 0.001), 0.1), 8);
    view.x = mx - (mx - view.x) * k / view.k;
    view.y = my - (my - view.y) * k / view.k;
    view.k = k;
  }, { passive: false });
  window.addEventListener("resize", resize);

  resize();
  (function frame() {
    step();
    draw();
    window.requestAnimationFrame(frame);
  })();
})();
