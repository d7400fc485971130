#include <stdio.h>

int main(void) {
  int v[8] = {5, 2, 7, 1, 9, 3, 8, 4};
  for (int i = 1; i < 8; i++) {
    int key = v[i];
    int j = i - 1;
    while (j >= 0 && v[j] > key) {
      v[j + 1] = v[j];
      j = j - 1;
    }
    v[j + 1] = key;
  }
  for (int i = 0; i < 8; i++) {
    printf("%d ", v[i]);
  }
  printf("\n");
  return 0;
}
