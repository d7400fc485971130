int churn(int seed) {
  int a = seed + 1;
  int b = a * 3;
  int c = b - seed;
  int d = c + a;
  int e = d * d;
  int f = e - b;
  int g = f + c;
  int h = g * 2;
  a = a + h;
  b = b + g;
  c = c + f;
  return a + b + c + d + e + f + g + h;
}

int main(void) {
  int x = 4;
  int y = churn(x);
  int z = churn(y);
  return (y + z) % 251;
}
