int main(void) {
  int s = 0;
  for (int i = 0; i < 10; i++) {
    if (i % 3 == 0) {
      s += i;
    }
  }
  return s;
}
